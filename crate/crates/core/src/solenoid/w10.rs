//! `sup{Σ wᵢ g(sᵢ) : |g| ≤ 1, Lip g ≤ 1}` for finitely many atoms on a line.
//!
//! Only adjacent constraints `|g_{i+1} − g_i| ≤ s_{i+1} − s_i` matter, so the
//! program is a chain. The forward pass keeps the value function
//! `V_i(g) = w_i g + max_{|g'−g| ≤ d} V_{i−1}(g')` as a concave piecewise
//! linear function on `[−1, 1]` and records its argmax interval; the backward
//! pass reads off an optimal `g`.

use std::collections::VecDeque;

/// Concave piecewise-linear function on `[−1, 1]`, stored as slope drops.
///
/// `left` holds breakpoints left of the middle segment (slopes there are
/// positive), `right` those to its right (negative slopes). Positions carry
/// lazy offsets so dilation is O(1).
struct Envelope {
    left: VecDeque<(f64, f64)>,
    right: VecDeque<(f64, f64)>,
    left_off: f64,
    right_off: f64,
    mid_slope: f64,
}

impl Envelope {
    fn linear(w: f64) -> Self {
        let mut e = Self {
            left: VecDeque::new(),
            right: VecDeque::new(),
            left_off: 0.0,
            right_off: 0.0,
            mid_slope: w,
        };
        e.normalize();
        e
    }

    fn left_end(&self) -> f64 {
        self.left.back().map_or(-1.0, |&(p, _)| p + self.left_off)
    }

    fn right_end(&self) -> f64 {
        self.right.front().map_or(1.0, |&(p, _)| p + self.right_off)
    }

    fn argmax(&self) -> (f64, f64) {
        if self.mid_slope > 0.0 {
            let c = self.right_end();
            (c, c)
        } else if self.mid_slope < 0.0 {
            let a = self.left_end();
            (a, a)
        } else {
            (self.left_end(), self.right_end())
        }
    }

    fn push_left(&mut self, pos: f64, drop: f64) {
        self.left.push_back((pos - self.left_off, drop));
    }

    fn push_right(&mut self, pos: f64, drop: f64) {
        self.right.push_front((pos - self.right_off, drop));
    }

    /// Moves breakpoints across the middle until its slope sign determines the argmax.
    fn normalize(&mut self) {
        while self.mid_slope > 0.0 {
            let Some(&(p, drop)) = self.right.front() else { break };
            if self.mid_slope - drop < 0.0 {
                break;
            }
            self.right.pop_front();
            self.push_left(p + self.right_off, drop);
            self.mid_slope -= drop;
        }
        while self.mid_slope < 0.0 {
            let Some(&(p, drop)) = self.left.back() else { break };
            if self.mid_slope + drop > 0.0 {
                break;
            }
            self.left.pop_back();
            self.push_right(p + self.left_off, drop);
            self.mid_slope += drop;
        }
    }

    fn add_linear(&mut self, w: f64) {
        self.mid_slope += w;
        self.normalize();
    }

    /// `g ↦ max_{|g'−g| ≤ d} f(g')`, restricted back to `[−1, 1]`.
    fn dilate(&mut self, d: f64) {
        let s = self.mid_slope;
        if s > 0.0 {
            let c = self.right_end();
            if let Some(front) = self.right.front_mut() {
                front.1 -= s;
            }
            self.left_off -= d;
            self.right_off += d;
            self.push_left(c - d, s);
        } else if s < 0.0 {
            let a = self.left_end();
            if let Some(back) = self.left.back_mut() {
                back.1 += s;
            }
            self.left_off -= d;
            self.right_off += d;
            self.push_right(a + d, -s);
        } else {
            self.left_off -= d;
            self.right_off += d;
        }
        self.mid_slope = 0.0;
        while self.left.front().is_some_and(|&(p, _)| p + self.left_off <= -1.0) {
            self.left.pop_front();
        }
        while self.right.back().is_some_and(|&(p, _)| p + self.right_off >= 1.0) {
            self.right.pop_back();
        }
    }
}

/// Exact norm for atoms at strictly increasing `support` with `weights`.
pub fn w10_norm_points(support: &[f64], weights: &[f64]) -> f64 {
    let g = w10_optimizer(support, weights);
    weights.iter().zip(&g).map(|(w, g)| w * g).sum::<f64>().max(0.0)
}

/// An optimal test function sampled at the atoms.
pub fn w10_optimizer(support: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(support.len(), weights.len(), "support and weights differ in length");
    let n = support.len();
    if n == 0 {
        return Vec::new();
    }
    let mut plateaus = Vec::with_capacity(n);
    let mut env = Envelope::linear(weights[0]);
    plateaus.push(env.argmax());
    for i in 1..n {
        env.dilate(support[i] - support[i - 1]);
        env.add_linear(weights[i]);
        plateaus.push(env.argmax());
    }
    let mut g = vec![0.0; n];
    let (lo, hi) = plateaus[n - 1];
    g[n - 1] = 0f64.clamp(lo, hi);
    for i in (0..n - 1).rev() {
        let d = support[i + 1] - support[i];
        let (lo, hi) = plateaus[i];
        let next = g[i + 1];
        g[i] = next.clamp(lo, hi).clamp(next - d, next + d);
    }
    g
}

/// Reference solver: dynamic programming over `g` restricted to the lattice
/// `{−1, −1+h, …, 1}` with steps bounded by `⌊dᵢ/h⌋`. Never exceeds the
/// exact value.
pub fn w10_grid_search(support: &[f64], weights: &[f64], h: f64) -> f64 {
    let m = (2.0 / h).round() as usize;
    let lattice: Vec<f64> = (0..=m).map(|j| -1.0 + 2.0 * j as f64 / m as f64).collect();
    let mut v: Vec<f64> = match weights.first() {
        Some(&w) => lattice.iter().map(|g| w * g).collect(),
        None => return 0.0,
    };
    for i in 1..weights.len() {
        let win = ((support[i] - support[i - 1]) / h + 1e-9).floor() as usize;
        let best = sliding_max(&v, win);
        v = best.iter().zip(&lattice).map(|(b, g)| b + weights[i] * g).collect();
    }
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `out[j] = max v[j−w ..= j+w]` by a monotone deque.
fn sliding_max(v: &[f64], w: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for (j, o) in out.iter_mut().enumerate() {
        while next < n && next <= j + w {
            while dq.back().is_some_and(|&b| v[b] <= v[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&f| f + w < j) {
            dq.pop_front();
        }
        *o = v[dq[0]];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_atom() {
        assert_eq!(w10_norm_points(&[0.37], &[1.0]), 1.0);
        assert_eq!(w10_norm_points(&[0.37], &[-2.5]), 2.5);
        assert_eq!(w10_norm_points(&[], &[]), 0.0);
    }

    #[test]
    fn dipole() {
        let v = w10_norm_points(&[0.2, 0.7], &[1.0, -1.0]);
        assert!((v - 0.5).abs() < 1e-15);
        assert!((w10_grid_search(&[0.2, 0.7], &[1.0, -1.0], 1e-3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_pair() {
        let v = w10_norm_points(&[0.1, 0.9], &[2.0, -1.0]);
        assert!((v - 1.8).abs() < 1e-15);
        assert!((w10_grid_search(&[0.1, 0.9], &[2.0, -1.0], 1e-3) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn optimizer_is_feasible() {
        let s = [0.0, 0.05, 0.3, 0.31, 0.8, 1.0];
        let w = [1.0, -2.0, 0.5, 0.7, -1.5, 0.2];
        let g = w10_optimizer(&s, &w);
        assert!(g.iter().all(|v| v.abs() <= 1.0 + 1e-15));
        for i in 1..s.len() {
            assert!((g[i] - g[i - 1]).abs() <= s[i] - s[i - 1] + 1e-15);
        }
    }

    #[test]
    fn sliding_max_matches_naive() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        for w in 0..4 {
            let fast = sliding_max(&v, w);
            for j in 0..v.len() {
                let lo = j.saturating_sub(w);
                let hi = (j + w).min(v.len() - 1);
                let naive = v[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(fast[j], naive);
            }
        }
    }

    fn atoms() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.0..1.0f64, -1.0..1.0f64), 1..12).prop_map(|mut v| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.dedup_by(|a, b| a.0 == b.0);
            v.into_iter().unzip()
        })
    }

    proptest! {
        #[test]
        fn dominates_grid_search((s, w) in atoms()) {
            let exact = w10_norm_points(&s, &w);
            let grid = w10_grid_search(&s, &w, 1e-3);
            prop_assert!(grid <= exact + 1e-12);
            prop_assert!(exact - grid < 2e-3 * (1.0 + w.iter().map(|x| x.abs()).sum::<f64>()));
        }

        #[test]
        fn homogeneous((s, w) in atoms(), c in -3.0..3.0f64) {
            let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
            let lhs = w10_norm_points(&s, &scaled);
            let rhs = c.abs() * w10_norm_points(&s, &w);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn bounded_by_total_variation((s, w) in atoms()) {
            let v = w10_norm_points(&s, &w);
            prop_assert!(v <= w.iter().map(|x| x.abs()).sum::<f64>() + 1e-12);
            prop_assert!(v >= w.iter().sum::<f64>().abs() - 1e-12);
        }
    }
}
