//! Pure building blocks shared by every solver: hard thresholding, the
//! sign convention, sign/phase-invariant distances and the amplitude loss.

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::operator::MeasurementOperator;

/// Number of entries a hard-thresholding step may retain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SparsityBudget(pub usize);

impl SparsityBudget {
    /// `floor(fraction * len)`, tolerant of the representation error in
    /// decimal fractions such as `0.15 * 1000`.
    pub fn from_fraction(fraction: f64, len: usize) -> Self {
        SparsityBudget(fraction_count(fraction, len))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// `floor(fraction * len)` with a relative slack of a few ulps so that
/// products like `0.15 * 1000 = 149.99999999999997` round to 150.
pub fn fraction_count(fraction: f64, len: usize) -> usize {
    if !(fraction > 0.0) {
        return 0;
    }
    let raw = fraction * len as f64;
    let count = (raw * (1.0 + 4.0 * f64::EPSILON)).floor();
    (count as usize).min(len)
}

/// Keeps the `s` entries of largest magnitude and zeroes the rest.
///
/// Exactly `s` entries survive. Entries tied at the cut-off magnitude are
/// taken in increasing index order.
pub fn hard_threshold(w: &[f64], s: SparsityBudget) -> Result<Vec<f64>> {
    let keep = s.0;
    if keep > w.len() {
        return Err(Error::InvalidBudget {
            budget: keep,
            len: w.len(),
        });
    }
    let mut out = vec![0.0; w.len()];
    if keep == 0 {
        return Ok(out);
    }
    if keep == w.len() {
        out.copy_from_slice(w);
        return Ok(out);
    }
    for i in support_of_largest(w, keep) {
        out[i] = w[i];
    }
    Ok(out)
}

/// Indices of the `keep` largest-magnitude entries under the
/// (magnitude descending, index ascending) order. Linear time on average.
pub(crate) fn support_of_largest(w: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    if keep == 0 {
        return Vec::new();
    }
    let by_rank = |&a: &usize, &b: &usize| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b));
    if keep < idx.len() {
        idx.select_nth_unstable_by(keep - 1, by_rank);
        idx.truncate(keep);
    }
    idx.sort_unstable();
    idx
}

/// `t / |t|`, with `sign(0) = 0`.
#[inline]
pub fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Complex sign `z / |z|`, with zero mapped to zero.
#[inline]
pub fn complex_sign(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        Complex64::new(0.0, 0.0)
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn complex_norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Distance modulo global sign: `min(||x - x*||, ||x + x*||)`.
pub fn dist(x: &[f64], x_star: &[f64]) -> Result<f64> {
    check_len("dist", x_star.len(), x.len())?;
    let (mut minus, mut plus) = (0.0, 0.0);
    for (a, b) in x.iter().zip(x_star) {
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    Ok(minus.min(plus).sqrt())
}

/// Distance modulo global phase: `min_phi ||e^{-j phi} x - x*||`.
///
/// Mathematically equal to `sqrt(||x||^2 + ||x*||^2 - 2 |<x, x*>|)`. The
/// value is evaluated by rotating `x` onto the optimal phase and taking the
/// residual norm directly, which keeps full relative precision when the
/// distance is many orders of magnitude below `||x*||`.
pub fn dist_complex(x: &[Complex64], x_star: &[Complex64]) -> Result<f64> {
    check_len("dist_complex", x_star.len(), x.len())?;
    let rot = optimal_rotation(x, x_star);
    Ok(x.iter()
        .zip(x_star)
        .map(|(a, b)| (a * rot - b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Unit phase `r` minimizing `||r x - x*||`, i.e. the phase of `<x, x*>`.
pub fn optimal_rotation(x: &[Complex64], x_star: &[Complex64]) -> Complex64 {
    let inner: Complex64 = x.iter().zip(x_star).map(|(a, b)| a.conj() * b).sum();
    let r = inner.norm();
    if r > 0.0 {
        inner / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Amplitude loss `(1/2m) sum_i (y_i - |a_i^T x| - eta_i)^2`.
pub fn loss<A: MeasurementOperator + ?Sized>(x: &[f64], eta: &[f64], y: &[f64], a: &A) -> Result<f64> {
    let m = a.num_rows();
    check_len("loss: x", a.num_cols(), x.len())?;
    check_len("loss: eta", m, eta.len())?;
    check_len("loss: y", m, y.len())?;
    let amp = a.apply(x)?;
    Ok(amplitude_loss(y, &amp, eta))
}

/// `(1/2m) sum (y - amp - eta)^2` on precomputed amplitudes.
pub(crate) fn amplitude_loss(y: &[f64], amp: &[f64], eta: &[f64]) -> f64 {
    let m = y.len() as f64;
    let total: f64 = y
        .iter()
        .zip(amp)
        .zip(eta)
        .map(|((yi, ai), ei)| {
            let r = yi - ai - ei;
            r * r
        })
        .sum();
    total / (2.0 * m)
}

pub(crate) fn ensure_finite(context: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseOperator;
    use proptest::prelude::*;

    fn oracle_threshold(w: &[f64], s: usize) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].abs().partial_cmp(&w[a].abs()).unwrap().then(a.cmp(&b)));
        let mut out = vec![0.0; w.len()];
        for &i in idx.iter().take(s) {
            out[i] = w[i];
        }
        out
    }

    #[test]
    fn threshold_examples() {
        let w = [3.0, -5.0, 2.0, 1.0];
        assert_eq!(
            hard_threshold(&w, SparsityBudget(2)).unwrap(),
            vec![3.0, -5.0, 0.0, 0.0]
        );
        assert_eq!(hard_threshold(&w, SparsityBudget(0)).unwrap(), vec![0.0; 4]);
        assert_eq!(
            hard_threshold(&[1.0, -1.0, 1.0], SparsityBudget(2)).unwrap(),
            vec![1.0, -1.0, 0.0]
        );
        assert_eq!(hard_threshold(&w, SparsityBudget(4)).unwrap(), w.to_vec());
    }

    #[test]
    fn threshold_rejects_oversized_budget() {
        let err = hard_threshold(&[1.0, 2.0], SparsityBudget(3)).unwrap_err();
        assert!(matches!(err, Error::InvalidBudget { budget: 3, len: 2 }));
    }

    #[test]
    fn fraction_count_floors_decimal_products() {
        assert_eq!(fraction_count(0.15, 1000), 150);
        assert_eq!(fraction_count(0.05, 100), 5);
        assert_eq!(fraction_count(0.3, 1000), 300);
        assert_eq!(fraction_count(0.7, 1000), 700);
        assert_eq!(fraction_count(0.0, 1000), 0);
        assert_eq!(fraction_count(0.019, 100), 1);
        assert_eq!(fraction_count(1.0, 7), 7);
    }

    #[test]
    fn sign_values() {
        assert_eq!(sign(-2.5), -1.0);
        assert_eq!(sign(7.0), 1.0);
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
    }

    #[test]
    fn dist_examples() {
        let x = [1.0, -2.0, 0.5];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(dist(&x, &x).unwrap(), 0.0);
        assert_eq!(dist(&neg, &x).unwrap(), 0.0);
        let d = dist(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(dist(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dist_complex_examples() {
        let xs = vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.25),
            Complex64::new(3.0, -1.0),
        ];
        let rotated: Vec<Complex64> = xs.iter().map(|z| z * Complex64::from_polar(1.0, 0.83)).collect();
        assert!(dist_complex(&rotated, &xs).unwrap() < 1e-12);
        let zero = vec![Complex64::new(0.0, 0.0); 3];
        assert!((dist_complex(&zero, &xs).unwrap() - complex_norm2(&xs)).abs() < 1e-14);
        assert!(dist_complex(&zero[..2], &xs).is_err());
    }

    #[test]
    fn dist_complex_matches_phase_grid() {
        // Dense grid over the phase, refined by golden-section search around the best cell.
        let x = vec![
            Complex64::new(0.3, -1.1),
            Complex64::new(2.0, 0.7),
            Complex64::new(-0.4, 0.9),
        ];
        let xs = vec![
            Complex64::new(-1.0, 0.2),
            Complex64::new(0.5, 1.5),
            Complex64::new(0.8, -0.3),
        ];
        let f = |phi: f64| -> f64 {
            let r = Complex64::from_polar(1.0, -phi);
            x.iter()
                .zip(&xs)
                .map(|(a, b)| (a * r - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let grid = 1_000_000;
        let step = std::f64::consts::TAU / grid as f64;
        let best = (0..grid)
            .map(|k| k as f64 * step)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        let grid_min = f(best);
        let got = dist_complex(&x, &xs).unwrap();
        assert!((got - grid_min).abs() < 1e-6, "{got} vs {grid_min}");
        let closed = (complex_norm2(&x).powi(2) + complex_norm2(&xs).powi(2)
            - 2.0 * x.iter().zip(&xs).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm())
        .sqrt();
        assert!((got - closed).abs() < 1e-12);
    }

    #[test]
    fn dist_complex_not_above_real_dist() {
        let x = [0.3, -1.2, 0.8];
        let xs = [1.0, 0.4, -0.6];
        let cx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let cxs: Vec<Complex64> = xs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        assert!(dist_complex(&cx, &cxs).unwrap() <= dist(&x, &xs).unwrap() + 1e-15);
    }

    #[test]
    fn loss_examples() {
        // rows (1,2), (-1,0.5), (0.3,-2)
        let a = DenseOperator::from_rows(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.3, -2.0]).unwrap();
        let x = [0.7, -0.4];
        let eta = [0.1, 0.0, -0.2];
        let y = [1.5, 0.2, 1.0];
        let ax = [0.7 - 0.8, -0.7 - 0.2, 0.21 + 0.8];
        let mut direct = 0.0;
        for i in 0..3 {
            let r: f64 = y[i] - f64::abs(ax[i]) - eta[i];
            direct += r * r;
        }
        direct /= 6.0;
        assert!((loss(&x, &eta, &y, &a).unwrap() - direct).abs() < 1e-12);

        let zero_x = [0.0, 0.0];
        let zero_eta = [0.0; 3];
        let expected = y.iter().map(|v| v * v).sum::<f64>() / 6.0;
        assert!((loss(&zero_x, &zero_eta, &y, &a).unwrap() - expected).abs() < 1e-15);
        assert!(loss(&x, &eta[..2], &y, &a).is_err());
    }

    proptest! {
        #[test]
        fn threshold_matches_sort_oracle(
            w in prop::collection::vec(prop_oneof![-3i32..=3, -100i32..=100], 1..40),
            frac in 0.0f64..=1.0,
        ) {
            let w: Vec<f64> = w.into_iter().map(|v| v as f64 * 0.25).collect();
            let s = ((w.len() as f64) * frac).floor() as usize;
            let got = hard_threshold(&w, SparsityBudget(s)).unwrap();
            prop_assert_eq!(&got, &oracle_threshold(&w, s));
            prop_assert_eq!(&hard_threshold(&got, SparsityBudget(s)).unwrap(), &got);
            prop_assert!(norm2(&got) <= norm2(&w));
            let nonzero_in = w.iter().filter(|v| **v != 0.0).count();
            if nonzero_in >= s {
                prop_assert_eq!(got.iter().filter(|v| **v != 0.0).count(), s);
            }
        }

        #[test]
        fn dist_sign_symmetry(
            pair in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            ))
        ) {
            let (x, xs) = pair;
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            let nxs: Vec<f64> = xs.iter().map(|v| -v).collect();
            let d = dist(&x, &xs).unwrap();
            prop_assert_eq!(d, dist(&nx, &xs).unwrap());
            prop_assert_eq!(d, dist(&x, &nxs).unwrap());
            let direct: f64 = x.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(d <= direct);
        }

        #[test]
        fn dist_complex_phase_invariant(
            re in prop::collection::vec(-3.0f64..3.0, 4),
            im in prop::collection::vec(-3.0f64..3.0, 4),
            re2 in prop::collection::vec(-3.0f64..3.0, 4),
            im2 in prop::collection::vec(-3.0f64..3.0, 4),
            phi in 0.0f64..std::f64::consts::TAU,
        ) {
            let x: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
            let xs: Vec<Complex64> = re2.iter().zip(&im2).map(|(a, b)| Complex64::new(*a, *b)).collect();
            let r = Complex64::from_polar(1.0, phi);
            let xr: Vec<Complex64> = x.iter().map(|z| z * r).collect();
            let d0 = dist_complex(&x, &xs).unwrap();
            let d1 = dist_complex(&xr, &xs).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12);
        }
    }
}
