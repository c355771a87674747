/// Rotates a row-major image counter-clockwise about its center
/// `((cols-1)/2, (rows-1)/2)` with bilinear interpolation. Pixels sampled
/// from outside the source read as 0.
pub fn rotate_image(pixels: &[f64], rows: usize, cols: usize, degrees: f64) -> Vec<f64> {
    assert_eq!(
        pixels.len(),
        rows * cols,
        "pixel buffer does not match shape"
    );
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (cols as f64 - 1.0) / 2.0;
    let cy = (rows as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= rows as isize || col >= cols as isize {
            0.0
        } else {
            pixels[r as usize * cols + col as usize]
        }
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for col in 0..cols {
            let dx = col as f64 - cx;
            let dy = cy - r as f64;
            // inverse map: rotate the output offset clockwise
            let sx = cx + c * dx + s * dy;
            let sy = cy - (-s * dx + c * dy);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[r * cols + col] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
    out
}
