//! Exact Euclidean distance transform via the separable lower-envelope method
//! (Felzenszwalb & Huttenlocher). Squared distances are integers and are
//! computed without rounding, so results match a brute-force scan bit for bit.

/// Squared distance from each cell of an `h x w` grid to the nearest cell with
/// `fg == true`; `INFINITY` everywhere when there is no such cell.
pub fn squared_edt(fg: &[bool], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(fg.len(), h * w);
    let mut grid: Vec<f64> = fg.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();

    let mut line = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];
    let mut scratch = Envelope::with_capacity(h.max(w));

    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        scratch.transform(&line[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        line[..w].copy_from_slice(row);
        scratch.transform(&line[..w], &mut out[..w]);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// 1-D squared distance transform of the sampled function `f`.
    /// Infinite samples contribute no parabola.
    fn transform(&mut self, f: &[f64], d: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = intersection(f, v, q);
                if s <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            d.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, dq) in d.iter_mut().enumerate() {
            while k + 1 < self.sites.len() && self.bounds[k + 1] < q as f64 {
                k += 1;
            }
            let v = self.sites[k];
            let diff = q as f64 - v as f64;
            *dq = diff * diff + f[v];
        }
    }
}

fn intersection(f: &[f64], v: usize, q: usize) -> f64 {
    let (vf, qf) = (v as f64, q as f64);
    ((f[q] + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_corner() {
        let mut fg = vec![false; 9];
        fg[0] = true;
        let d = squared_edt(&fg, 3, 3);
        assert_eq!(d, vec![0.0, 1.0, 4.0, 1.0, 2.0, 5.0, 4.0, 5.0, 8.0]);
    }

    #[test]
    fn empty_grid_is_infinite() {
        let d = squared_edt(&[false; 6], 2, 3);
        assert!(d.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn sparse_columns() {
        // Column 0 has no foreground; distances still come through the row pass.
        let fg = [false, false, true, false, false, false];
        assert_eq!(squared_edt(&fg, 2, 3), vec![4.0, 1.0, 0.0, 5.0, 2.0, 1.0]);
    }
}
