use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_map, js, DiscreteEnv, DiscreteJoint, MappingFn};
use crate::error::{Error, Result};

/// Outcome of the minimax map search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub g_star: MappingFn,
    pub g_star_index: usize,
    /// `js(g*(D_{i-1}) || D_i)` for the source pairs `i = 2..m`.
    pub divergences: Vec<f64>,
    /// `js(g*(D_m) || D_t)`.
    pub target_divergence: f64,
    /// Largest gap among the source-pair divergences (observable).
    pub lambda_source: f64,
    /// Largest gap once the target pair is included.
    pub lambda_full: f64,
}

/// `js(g(D_{i-1}) || D_i)` for each consecutive pair of `domains`.
pub fn pair_divergences(domains: &[DiscreteJoint], g: &MappingFn) -> Result<Vec<f64>> {
    domains
        .windows(2)
        .map(|w| js(&apply_map(&w[0], g)?, &w[1]))
        .collect()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Picks the candidate minimizing the worst source-pair divergence; ties go
/// to the earliest candidate.
pub fn find_g_star(env: &DiscreteEnv) -> Result<ConsistencyReport> {
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for (c, g) in env.candidate_maps().iter().enumerate() {
        let d = pair_divergences(env.sources(), g)?;
        let worst = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(_, w, _)| worst < *w) {
            best = Some((c, worst, d));
        }
    }
    let (idx, _, divergences) = best.ok_or(Error::EmptyFamily)?;
    let g_star = env.candidate_maps()[idx].clone();
    let m = env.num_sources();
    let target_divergence = js(&apply_map(&env.sources()[m - 1], &g_star)?, env.target())?;
    let mut full = divergences.clone();
    full.push(target_divergence);
    Ok(ConsistencyReport {
        g_star,
        g_star_index: idx,
        lambda_source: spread(&divergences),
        lambda_full: spread(&full),
        divergences,
        target_divergence,
    })
}

/// Every map on `nx` points when `nx^nx <= limit`, otherwise `limit` distinct
/// random maps with the identity first.
pub fn candidate_family<R: Rng + ?Sized>(nx: usize, limit: usize, rng: &mut R) -> Vec<MappingFn> {
    let total = (nx as u32).checked_pow(nx as u32).map(|t| t as usize);
    match total {
        Some(t) if t <= limit => (0..t)
            .map(|mut code| {
                let table = (0..nx)
                    .map(|_| {
                        let v = code % nx;
                        code /= nx;
                        v
                    })
                    .collect();
                MappingFn::new(table).expect("digits are below nx")
            })
            .collect(),
        _ => {
            let mut out = vec![MappingFn::identity(nx)];
            let mut seen: std::collections::HashSet<MappingFn> = out.iter().cloned().collect();
            while out.len() < limit.max(1) {
                let g = MappingFn::new((0..nx).map(|_| rng.random_range(0..nx)).collect())
                    .expect("range is below nx");
                if seen.insert(g.clone()) {
                    out.push(g);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn j(rows: &[&[f64]]) -> DiscreteJoint {
        DiscreteJoint::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn stationary_env_picks_identity() {
        let d = j(&[&[0.1, 0.2], &[0.3, 0.1], &[0.2, 0.1]]);
        let mut rng = rng_from(0, &[]);
        let env = DiscreteEnv::new(vec![d; 4], candidate_family(3, 256, &mut rng)).unwrap();
        let r = find_g_star(&env).unwrap();
        assert_eq!(r.g_star, MappingFn::identity(3));
        assert_eq!(r.lambda_source, 0.0);
        assert_eq!(r.lambda_full, 0.0);
    }

    #[test]
    fn single_candidate_wins() {
        let d = j(&[&[0.5, 0.0], &[0.25, 0.25]]);
        let g = MappingFn::constant(2, 1).unwrap();
        let env = DiscreteEnv::new(vec![d; 3], vec![g.clone()]).unwrap();
        assert_eq!(find_g_star(&env).unwrap().g_star, g);
        let empty = DiscreteEnv::new(vec![j(&[&[1.0]]); 3], vec![]).unwrap();
        assert!(matches!(find_g_star(&empty), Err(Error::EmptyFamily)));
    }

    #[test]
    fn cyclic_shift_is_recovered() {
        let a = j(&[&[0.6, 0.1], &[0.05, 0.25]]);
        let shift = MappingFn::shift(2, 1);
        let b = apply_map(&a, &shift).unwrap();
        let env = DiscreteEnv::new(
            vec![a.clone(), b.clone(), a.clone(), b.clone(), a],
            vec![
                MappingFn::identity(2),
                shift.clone(),
                MappingFn::constant(2, 0).unwrap(),
            ],
        )
        .unwrap();
        let r = find_g_star(&env).unwrap();
        assert_eq!(r.g_star, shift);
        assert!(r.divergences.iter().all(|d| *d == 0.0));
        assert_eq!(r.target_divergence, 0.0);
        assert_eq!((r.lambda_source, r.lambda_full), (0.0, 0.0));
    }

    #[test]
    fn family_sizes() {
        let mut rng = rng_from(1, &[]);
        assert_eq!(candidate_family(3, 256, &mut rng).len(), 27);
        let four = candidate_family(4, 256, &mut rng);
        assert_eq!(four.len(), 256);
        assert!(four.contains(&MappingFn::identity(4)));
        let five = candidate_family(5, 256, &mut rng);
        assert_eq!(five.len(), 256);
        assert_eq!(five[0], MappingFn::identity(5));
        let set: std::collections::HashSet<_> = five.iter().collect();
        assert_eq!(set.len(), 256);
    }
}
