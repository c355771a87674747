use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::idx::{read_idx_images, read_idx_labels};
use super::rotate::rotate_image;
use super::{DatasetKind, DomainData, EnvironmentSpec, Sample};
use crate::error::{Error, Result};
use crate::seed::rng_from;

const CLOUD_STREAM: u64 = 0xC10D;
const MNIST_STREAM: u64 = 0x4D4E;

fn expect_kind(spec: &EnvironmentSpec, kind: DatasetKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "generator for {} called with a {} spec",
            kind.name(),
            spec.kind.name()
        )));
    }
    spec.validate()
}

fn gaussian2(rng: &mut impl Rng) -> [f64; 2] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Counter-clockwise rotation of a 2-D point.
pub fn rotate_2d(x: [f64; 2], degrees: f64) -> [f64; 2] {
    let (s, c) = degrees.to_radians().sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Class means sit on the radial line at angle `pi * i / (m - 1)`.
pub fn gen_evolcircle(spec: &EnvironmentSpec) -> Result<Vec<DomainData>> {
    expect_kind(spec, DatasetKind::EvolCircle)?;
    let e = &spec.extra;
    let m = spec.num_domains;
    (0..m)
        .map(|i| {
            let mut rng = rng_from(spec.seed, &[i as u64]);
            let theta = PI * i as f64 / (m - 1) as f64;
            let (s, c) = theta.sin_cos();
            let samples = (0..spec.samples_per_domain)
                .map(|j| {
                    let y = j % 2;
                    let rad = if y == 0 {
                        e.radius - e.radial_offset
                    } else {
                        e.radius + e.radial_offset
                    };
                    let z = gaussian2(&mut rng);
                    Sample::new(vec![rad * c + e.sigma * z[0], rad * s + e.sigma * z[1]], y)
                })
                .collect();
            DomainData::new(i, samples, 2)
        })
        .collect()
}

/// Label 1 iff `(cos a, sin a) . x >= 0`.
pub fn rplate_label(x: &[f64], alpha_degrees: f64) -> usize {
    let (s, c) = alpha_degrees.to_radians().sin_cos();
    usize::from(c * x[0] + s * x[1] >= 0.0)
}

/// Standard-normal features with a labeling boundary rotating by
/// `extra.boundary_step_deg` per domain.
pub fn gen_rplate(spec: &EnvironmentSpec) -> Result<Vec<DomainData>> {
    expect_kind(spec, DatasetKind::RPlate)?;
    (0..spec.num_domains)
        .map(|i| {
            let mut rng = rng_from(spec.seed, &[i as u64]);
            let alpha = i as f64 * spec.extra.boundary_step_deg;
            loop {
                let samples: Vec<Sample> = (0..spec.samples_per_domain)
                    .map(|_| {
                        let x = gaussian2(&mut rng);
                        Sample::new(x.to_vec(), rplate_label(&x, alpha))
                    })
                    .collect();
                let ones = samples.iter().filter(|s| s.y == 1).count();
                if ones > 0 && ones < samples.len() {
                    return DomainData::new(i, samples, 2);
                }
            }
        })
        .collect()
}

/// One fixed two-blob cloud, rotated by `i * domain_distance` degrees for
/// domain `i`.
pub fn gen_rotated_cloud(spec: &EnvironmentSpec) -> Result<Vec<DomainData>> {
    expect_kind(spec, DatasetKind::RotatedCloud)?;
    let e = &spec.extra;
    let mut rng = rng_from(spec.seed, &[CLOUD_STREAM]);
    let base: Vec<([f64; 2], usize)> = (0..spec.samples_per_domain)
        .map(|j| {
            let y = j % 2;
            let cy = if y == 0 {
                e.cloud_center[1]
            } else {
                -e.cloud_center[1]
            };
            let z = gaussian2(&mut rng);
            (
                [
                    e.cloud_center[0] + e.cloud_sigma * z[0],
                    cy + e.cloud_sigma * z[1],
                ],
                y,
            )
        })
        .collect();
    (0..spec.num_domains)
        .map(|i| {
            let deg = i as f64 * spec.domain_distance;
            let samples = base
                .iter()
                .map(|(x, y)| Sample::new(rotate_2d(*x, deg).to_vec(), *y))
                .collect();
            DomainData::new(i, samples, 2)
        })
        .collect()
}

/// Rotated MNIST from IDX files.
///
/// Instances are drawn without replacement, stratified so that every domain
/// holds `samples_per_domain / K` images per class (the remainder goes to the
/// lowest labels). Domain `i` is rotated by `i * domain_distance` degrees.
pub fn load_rmnist(
    image_path: &std::path::Path,
    label_path: &std::path::Path,
    spec: &EnvironmentSpec,
) -> Result<Vec<DomainData>> {
    expect_kind(spec, DatasetKind::RotatedMnist)?;
    let images = read_idx_images(image_path)?;
    let labels = read_idx_labels(label_path)?;
    if images.count() != labels.len() {
        return Err(Error::Ingestion {
            path: label_path.to_path_buf(),
            offset: 4,
            message: format!(
                "label count {} does not match image count {} in {}",
                labels.len(),
                images.count(),
                image_path.display()
            ),
        });
    }
    let k = spec.num_classes();
    if let Some(pos) = labels.iter().position(|&l| l as usize >= k) {
        return Err(Error::Ingestion {
            path: label_path.to_path_buf(),
            offset: 8 + pos as u64,
            message: format!("label {} is outside 0..{k}", labels[pos]),
        });
    }

    let mut rng = rng_from(spec.seed, &[MNIST_STREAM]);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, &l) in labels.iter().enumerate() {
        pools[l as usize].push(j);
    }
    for p in &mut pools {
        p.shuffle(&mut rng);
    }
    let n = spec.samples_per_domain;
    let quota: Vec<usize> = (0..k).map(|c| n / k + usize::from(c < n % k)).collect();
    for (c, p) in pools.iter().enumerate() {
        let need = quota[c] * spec.num_domains;
        if p.len() < need {
            return Err(Error::InsufficientSamples(format!(
                "class {c} has {} images in {}, need {need}",
                p.len(),
                image_path.display()
            )));
        }
    }

    let (rows, cols) = (images.rows(), images.cols());
    (0..spec.num_domains)
        .map(|i| {
            let mut chosen: Vec<usize> = (0..k)
                .flat_map(|c| pools[c][i * quota[c]..(i + 1) * quota[c]].iter().copied())
                .collect();
            chosen.shuffle(&mut rng);
            let deg = i as f64 * spec.domain_distance;
            let samples = chosen
                .into_iter()
                .map(|j| {
                    let pix: Vec<f64> = images.image(j).iter().map(|&b| b as f64 / 255.0).collect();
                    Sample::new(rotate_image(&pix, rows, cols, deg), labels[j] as usize)
                })
                .collect();
            DomainData::new(i, samples, k)
        })
        .collect()
}

/// Dispatches on `spec.kind`; rotated MNIST reads the paths in `spec.extra`.
pub fn generate(spec: &EnvironmentSpec) -> Result<Vec<DomainData>> {
    match spec.kind {
        DatasetKind::EvolCircle => gen_evolcircle(spec),
        DatasetKind::RPlate => gen_rplate(spec),
        DatasetKind::RotatedCloud => gen_rotated_cloud(spec),
        DatasetKind::RotatedMnist => {
            let (Some(img), Some(lbl)) = (&spec.extra.mnist_images, &spec.extra.mnist_labels)
            else {
                return Err(Error::Config(
                    "rmnist needs extra.mnist_images and extra.mnist_labels".into(),
                ));
            };
            load_rmnist(img, lbl, spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: DatasetKind, m: usize, n: usize, seed: u64) -> EnvironmentSpec {
        let mut s = EnvironmentSpec::new(kind, seed);
        s.num_domains = m;
        s.samples_per_domain = n;
        s
    }

    #[test]
    fn evolcircle_defaults() {
        let s = spec(DatasetKind::EvolCircle, 30, 220, 7);
        let d = gen_evolcircle(&s).unwrap();
        assert_eq!(d.len(), 30);
        for (i, dom) in d.iter().enumerate() {
            assert_eq!(dom.index(), i);
            assert_eq!(dom.len(), 220);
            assert!(dom.class_indices().iter().all(|c| !c.is_empty()));
        }
    }

    #[test]
    fn evolcircle_zero_variance_hits_centers() {
        let mut s = spec(DatasetKind::EvolCircle, 3, 4, 0);
        s.extra.sigma = 0.0;
        let d = gen_evolcircle(&s).unwrap();
        for (i, dom) in d.iter().enumerate() {
            let theta = PI * i as f64 / 2.0;
            for smp in dom.samples() {
                let r = if smp.y == 0 { 1.5 } else { 2.5 };
                assert_eq!(smp.x, vec![r * theta.cos(), r * theta.sin()]);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in [
            DatasetKind::EvolCircle,
            DatasetKind::RPlate,
            DatasetKind::RotatedCloud,
        ] {
            let s = spec(kind, 5, 40, 11);
            assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
            let other = spec(kind, 5, 40, 12);
            assert_ne!(generate(&s).unwrap(), generate(&other).unwrap());
        }
    }

    #[test]
    fn wrong_kind_is_a_config_error() {
        let s = spec(DatasetKind::RPlate, 5, 40, 0);
        assert!(matches!(gen_evolcircle(&s), Err(Error::Config(_))));
    }

    #[test]
    fn rplate_boundary_angles_and_tie() {
        let s = spec(DatasetKind::RPlate, 30, 100, 3);
        let d = gen_rplate(&s).unwrap();
        let angles: Vec<f64> = (0..30)
            .map(|i| i as f64 * s.extra.boundary_step_deg)
            .collect();
        assert_eq!(angles[29], 348.0);
        for (dom, a) in d.iter().zip(&angles) {
            for smp in dom.samples() {
                assert_eq!(smp.y, rplate_label(&smp.x, *a));
            }
        }
        assert_eq!(rplate_label(&[0.0, 1.0], 0.0), 1);
        assert_eq!(rplate_label(&[0.0, -1.0], 0.0), 1);
        assert_eq!(rplate_label(&[0.0, 0.0], 123.0), 1);
    }

    #[test]
    fn rplate_half_turn_complements() {
        let mut rng = rng_from(5, &[]);
        for _ in 0..1000 {
            let x = gaussian2(&mut rng);
            if x[0].abs() < 1e-9 {
                continue;
            }
            assert_eq!(rplate_label(&x, 0.0) + rplate_label(&x, 180.0), 1);
        }
    }

    #[test]
    fn cloud_zero_distance_is_constant() {
        let mut s = spec(DatasetKind::RotatedCloud, 4, 30, 1);
        s.domain_distance = 0.0;
        let d = gen_rotated_cloud(&s).unwrap();
        for dom in &d[1..] {
            assert_eq!(dom.samples(), d[0].samples());
        }
    }

    #[test]
    fn cloud_full_turn_returns() {
        let m = 12;
        let mut s = spec(DatasetKind::RotatedCloud, m + 1, 30, 1);
        s.domain_distance = 360.0 / m as f64;
        let d = gen_rotated_cloud(&s).unwrap();
        for (a, b) in d[m].samples().iter().zip(d[0].samples()) {
            for (u, v) in a.x.iter().zip(&b.x) {
                assert!((u - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cloud_consecutive_mean_shift_is_constant() {
        let mut s = spec(DatasetKind::RotatedCloud, 12, 200, 4);
        s.domain_distance = 15.0;
        let d = gen_rotated_cloud(&s).unwrap();
        let means = |dom: &DomainData| -> Vec<[f64; 2]> {
            let mut m = [[0.0; 2]; 2];
            let mut n = [0.0; 2];
            for smp in dom.samples() {
                m[smp.y][0] += smp.x[0];
                m[smp.y][1] += smp.x[1];
                n[smp.y] += 1.0;
            }
            m.iter().zip(n).map(|(v, c)| [v[0] / c, v[1] / c]).collect()
        };
        let m0 = means(&d[0]);
        // chord length of a rotation by 15 degrees about the origin
        let expect: Vec<f64> = m0
            .iter()
            .map(|c| 2.0 * (c[0].hypot(c[1])) * (7.5f64.to_radians()).sin())
            .collect();
        for w in d.windows(2) {
            let (a, b) = (means(&w[0]), means(&w[1]));
            for k in 0..2 {
                let dist = (a[k][0] - b[k][0]).hypot(a[k][1] - b[k][1]);
                assert!((dist - expect[k]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn rotation_is_isometry(seed in 0u64..1000, dist in -90.0f64..90.0) {
            let mut s = spec(DatasetKind::RotatedCloud, 4, 12, seed);
            s.domain_distance = dist;
            let d = gen_rotated_cloud(&s).unwrap();
            let pd = |dom: &DomainData, a: usize, b: usize| {
                let (x, y) = (&dom.samples()[a].x, &dom.samples()[b].x);
                (x[0] - y[0]).hypot(x[1] - y[1])
            };
            for dom in &d[1..] {
                for a in 0..12 {
                    for b in 0..12 {
                        prop_assert!((pd(dom, a, b) - pd(&d[0], a, b)).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn rplate_relabel_oracle(seed in 0u64..1000) {
            let s = spec(DatasetKind::RPlate, 6, 20, seed);
            for dom in gen_rplate(&s).unwrap() {
                let a = dom.index() as f64 * 12.0;
                for smp in dom.samples() {
                    let w = [a.to_radians().cos(), a.to_radians().sin()];
                    let y = usize::from(w[0] * smp.x[0] + w[1] * smp.x[1] >= 0.0);
                    prop_assert_eq!(smp.y, y);
                }
            }
        }
    }
}
