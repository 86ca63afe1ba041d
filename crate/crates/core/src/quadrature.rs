//! Adaptive Simpson quadrature for complex-valued integrands.

use num_complex::Complex64;

pub const DEFAULT_MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: Complex64,
    pub evaluations: usize,
    /// Some interval hit the depth cap before meeting its tolerance.
    pub depth_capped: bool,
}

struct State<'f, F> {
    f: &'f F,
    evals: usize,
    capped: bool,
    max_depth: u32,
}

impl<F: Fn(f64) -> Complex64> State<'_, F> {
    fn eval(&mut self, x: f64) -> Complex64 {
        self.evals += 1;
        (self.f)(x)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            self.capped = true;
            return left + right + delta / 15.0;
        }
        self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
            + self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
    }
}

/// `∫_a^b f` to absolute tolerance `tol`, starting from `panels` equal
/// sub-intervals that share the tolerance in proportion to their length.
pub fn adaptive_simpson<F>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    panels: usize,
    max_depth: u32,
) -> Quadrature
where
    F: Fn(f64) -> Complex64,
{
    let mut st = State {
        f,
        evals: 0,
        capped: false,
        max_depth,
    };
    if a == b {
        return Quadrature {
            value: Complex64::new(0.0, 0.0),
            evaluations: 0,
            depth_capped: false,
        };
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    let mut x0 = a;
    let mut f0 = st.eval(a);
    for p in 0..panels {
        let x1 = if p + 1 == panels {
            b
        } else {
            a + (p + 1) as f64 * h
        };
        let xm = 0.5 * (x0 + x1);
        let fm = st.eval(xm);
        let f1 = st.eval(x1);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += st.refine(x0, x1, f0, fm, f1, whole, tol / panels as f64, 0);
        x0 = x1;
        f0 = f1;
    }
    Quadrature {
        value: total,
        evaluations: st.evals,
        depth_capped: st.capped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = adaptive_simpson(
            &|x: f64| Complex64::new(x * x * x, -x),
            0.0,
            2.0,
            1e-12,
            1,
            40,
        );
        assert!((q.value - Complex64::new(4.0, -2.0)).norm() < 1e-13);
    }

    #[test]
    fn oscillatory_complex_exponential() {
        // ∫_0^π e^{ix} dx = 2i
        let q = adaptive_simpson(
            &|x: f64| Complex64::from_polar(1.0, x),
            0.0,
            std::f64::consts::PI,
            1e-10,
            4,
            40,
        );
        assert!((q.value - Complex64::new(0.0, 2.0)).norm() < 1e-10);
        assert!(!q.depth_capped);
    }

    #[test]
    fn decaying_integrand_over_long_range() {
        let q = adaptive_simpson(
            &|x: f64| Complex64::new((-2.0 * x).exp(), 0.0),
            0.0,
            40.0,
            1e-10,
            40,
            40,
        );
        assert!((q.value.re - 0.5 * (1.0 - (-80f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn empty_interval() {
        let q = adaptive_simpson(&|_| Complex64::new(1.0, 0.0), 1.0, 1.0, 1e-10, 1, 40);
        assert_eq!(q.value, Complex64::new(0.0, 0.0));
    }
}
