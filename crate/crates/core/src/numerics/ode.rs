//! Dormand–Prince 5(4) with step-size control, dense output and event
//! location by bisection.

use serde::{Deserialize, Serialize};

use super::ToleranceConfig;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    TimeLimit,
    EventStop,
    SingularityStop,
    StepFailure,
}

#[derive(Debug, Clone)]
struct Segment<T, const N: usize> {
    t0: T,
    h: T,
    r: [[T; N]; 5],
}

/// Sampled solution with continuous interpolation between accepted steps.
#[derive(Debug, Clone)]
pub struct OdeSolution<T, const N: usize> {
    pub times: Vec<T>,
    pub states: Vec<[T; N]>,
    pub stop_reason: StopReason,
    segments: Vec<Segment<T, N>>,
    pub rhs_evaluations: usize,
}

impl<T: Real, const N: usize> OdeSolution<T, N> {
    pub fn t_start(&self) -> T {
        self.times[0]
    }

    pub fn t_end(&self) -> T {
        *self.times.last().expect("solution has at least one knot")
    }

    pub fn final_state(&self) -> [T; N] {
        *self.states.last().expect("solution has at least one knot")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State at `t`, clamped to `[t_start, t_end]`.
    pub fn interpolate(&self, t: T) -> [T; N] {
        if self.segments.is_empty() || t <= self.t_start() {
            return self.states[0];
        }
        if t >= self.t_end() {
            return self.final_state();
        }
        let idx = match self.times.binary_search_by(|k| k.partial_cmp(&t).expect("finite times")) {
            Ok(i) => return self.states[i],
            Err(i) => i - 1,
        };
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        dense_eval(seg, t)
    }

    /// `n ≥ 2` evenly spaced samples over the solved interval.
    pub fn sample_uniform(&self, n: usize) -> Vec<(T, [T; N])> {
        let n = n.max(2);
        let (a, b) = (self.t_start(), self.t_end());
        (0..n)
            .map(|i| {
                let t = a + (b - a) * T::lit(i as f64) / T::lit((n - 1) as f64);
                (t, self.interpolate(t))
            })
            .collect()
    }

    /// Each accepted step as `(t_left, t_right)`.
    pub fn intervals(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

fn dense_eval<T: Real, const N: usize>(seg: &Segment<T, N>, t: T) -> [T; N] {
    let th = (t - seg.t0) / seg.h;
    let th1 = T::one() - th;
    let r = &seg.r;
    std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
}

struct Tableau<T> {
    c: [T; 7],
    a: [[T; 6]; 7],
    e: [T; 7],
    d: [T; 7],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let l = T::lit;
        let z = T::zero();
        Self {
            c: [z, l(0.2), l(0.3), l(0.8), l(8.0 / 9.0), T::one(), T::one()],
            a: [
                [z; 6],
                [l(0.2), z, z, z, z, z],
                [l(3.0 / 40.0), l(9.0 / 40.0), z, z, z, z],
                [l(44.0 / 45.0), l(-56.0 / 15.0), l(32.0 / 9.0), z, z, z],
                [
                    l(19372.0 / 6561.0),
                    l(-25360.0 / 2187.0),
                    l(64448.0 / 6561.0),
                    l(-212.0 / 729.0),
                    z,
                    z,
                ],
                [
                    l(9017.0 / 3168.0),
                    l(-355.0 / 33.0),
                    l(46732.0 / 5247.0),
                    l(49.0 / 176.0),
                    l(-5103.0 / 18656.0),
                    z,
                ],
                [l(35.0 / 384.0), z, l(500.0 / 1113.0), l(125.0 / 192.0), l(-2187.0 / 6784.0), l(11.0 / 84.0)],
            ],
            e: [
                l(71.0 / 57600.0),
                z,
                l(-71.0 / 16695.0),
                l(71.0 / 1920.0),
                l(-17253.0 / 339200.0),
                l(22.0 / 525.0),
                l(-1.0 / 40.0),
            ],
            d: [
                l(-12715105075.0 / 11282082432.0),
                z,
                l(87487479700.0 / 32700410799.0),
                l(-10690763975.0 / 1880347072.0),
                l(701980252875.0 / 199316789632.0),
                l(-1453857185.0 / 822651844.0),
                l(69997945.0 / 29380423.0),
            ],
        }
    }
}

fn finite<T: Real, const N: usize>(y: &[T; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

struct Stepper<'a, T, const N: usize, F> {
    rhs: &'a F,
    tab: Tableau<T>,
    evals: usize,
}

impl<T: Real, const N: usize, F: Fn(T, &[T; N]) -> Option<[T; N]>> Stepper<'_, T, N, F> {
    fn eval(&mut self, t: T, y: &[T; N]) -> Option<[T; N]> {
        self.evals += 1;
        (self.rhs)(t, y).filter(finite)
    }

    /// One trial step; `None` when the field is undefined at a stage.
    fn step(&mut self, t: T, y: &[T; N], k1: &[T; N], h: T) -> Option<([T; N], [[T; N]; 7])> {
        let mut k = [[T::zero(); N]; 7];
        k[0] = *k1;
        let mut y1 = *y;
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = self.tab.a[s][j];
                if a != T::zero() {
                    for i in 0..N {
                        ys[i] = ys[i] + h * a * kj[i];
                    }
                }
            }
            if s == 6 {
                y1 = ys;
            }
            k[s] = self.eval(t + self.tab.c[s] * h, &ys)?;
        }
        Some((y1, k))
    }
}

fn error_norm<T: Real, const N: usize>(
    y0: &[T; N],
    y1: &[T; N],
    k: &[[T; N]; 7],
    h: T,
    tab: &Tableau<T>,
    tol: &ToleranceConfig<T>,
) -> T {
    let mut acc = T::zero();
    for i in 0..N {
        let mut e = T::zero();
        for s in 0..7 {
            e = e + tab.e[s] * k[s][i];
        }
        let sk = tol.abs_tol + tol.rel_tol * y0[i].abs().max(y1[i].abs());
        let r = h * e / sk;
        acc = acc + r * r;
    }
    (acc / T::lit(N.max(1) as f64)).sqrt()
}

fn rms_scaled<T: Real, const N: usize>(v: &[T; N], y: &[T; N], tol: &ToleranceConfig<T>) -> T {
    let mut acc = T::zero();
    for i in 0..N {
        let r = v[i] / (tol.abs_tol + tol.rel_tol * y[i].abs());
        acc = acc + r * r;
    }
    (acc / T::lit(N.max(1) as f64)).sqrt()
}

/// Integrates `y' = rhs(t, y)` from `t_span.0` to `t_span.1 > t_span.0`.
///
/// `rhs` returning `None` (or a non-finite value) marks a singular region;
/// the step is retried with a smaller size, and the run ends with
/// `SingularityStop` once the step collapses. `stop_event` is tested after
/// each accepted step and the first crossing is located by bisection on the
/// dense output.
pub fn integrate_ode<T, const N: usize, F, E>(
    rhs: F,
    y0: [T; N],
    t_span: (T, T),
    tol: &ToleranceConfig<T>,
    stop_event: Option<E>,
) -> OdeSolution<T, N>
where
    T: Real,
    F: Fn(T, &[T; N]) -> Option<[T; N]>,
    E: Fn(&[T; N]) -> bool,
{
    let (t0, t_end) = t_span;
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0],
        stop_reason: StopReason::TimeLimit,
        segments: Vec::new(),
        rhs_evaluations: 0,
    };
    if let Some(ev) = &stop_event {
        if ev(&y0) {
            sol.stop_reason = StopReason::EventStop;
            return sol;
        }
    }
    let mut st = Stepper { rhs: &rhs, tab: Tableau::new(), evals: 0 };
    let Some(mut k1) = st.eval(t0, &y0) else {
        sol.stop_reason = StopReason::SingularityStop;
        sol.rhs_evaluations = st.evals;
        return sol;
    };
    let span = t_end - t0;
    if span <= T::zero() {
        sol.rhs_evaluations = st.evals;
        return sol;
    }
    let hmax = tol.max_step.unwrap_or(span).min(span);
    let mut h = initial_step(&mut st, t0, &y0, &k1, tol, hmax);
    let mut t = t0;
    let mut y = y0;
    let mut steps = 0usize;
    let mut last_rejected = false;
    let fifth = T::lit(0.2);
    let safety = T::lit(0.9);

    loop {
        if steps >= tol.max_steps {
            sol.stop_reason = StopReason::StepFailure;
            break;
        }
        let hmin = (T::lit(16.0) * T::epsilon() * t.abs().max(t0.abs())).max(T::min_positive_value().sqrt());
        if h < hmin {
            sol.stop_reason = StopReason::StepFailure;
            break;
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        steps += 1;
        let Some((y1, k)) = st.step(t, &y, &k1, h) else {
            if h <= hmin * T::lit(4.0) {
                sol.stop_reason = StopReason::SingularityStop;
                break;
            }
            h = h * T::lit(0.25);
            last_rejected = true;
            continue;
        };
        let err = error_norm(&y, &y1, &k, h, &st.tab, tol);
        if !err.is_finite() || err > T::one() {
            let fac = if err.is_finite() { (safety * err.powf(-fifth)).max(T::lit(0.2)) } else { T::lit(0.2) };
            h = h * fac;
            last_rejected = true;
            continue;
        }
        // accepted
        let seg = dense_segment(&y, &y1, &k, h, &st.tab, t);
        let t_new = if last { t_end } else { t + h };
        if let Some(ev) = &stop_event {
            if ev(&y1) {
                let (te, ye) = locate_event(&seg, ev, t, t_new);
                sol.segments.push(seg);
                sol.times.push(te);
                sol.states.push(ye);
                sol.stop_reason = StopReason::EventStop;
                break;
            }
        }
        sol.segments.push(seg);
        sol.times.push(t_new);
        sol.states.push(y1);
        t = t_new;
        y = y1;
        k1 = k[6];
        if last {
            break;
        }
        let mut fac = safety * if err > T::zero() { err.powf(-fifth) } else { T::lit(10.0) };
        fac = fac.min(T::lit(10.0)).max(T::lit(0.2));
        if last_rejected {
            fac = fac.min(T::one());
        }
        last_rejected = false;
        h = (h * fac).min(hmax);
    }
    sol.rhs_evaluations = st.evals;
    sol
}

fn initial_step<T: Real, const N: usize, F: Fn(T, &[T; N]) -> Option<[T; N]>>(
    st: &mut Stepper<'_, T, N, F>,
    t0: T,
    y0: &[T; N],
    f0: &[T; N],
    tol: &ToleranceConfig<T>,
    hmax: T,
) -> T {
    let small = T::lit(1e-6).min(hmax);
    let d0 = rms_scaled(y0, y0, tol);
    let d1 = rms_scaled(f0, y0, tol);
    let mut h0 = if d0 < T::lit(1e-10) || d1 < T::lit(1e-10) { small } else { T::lit(0.01) * d0 / d1 };
    h0 = h0.min(hmax);
    let y1: [T; N] = std::array::from_fn(|i| y0[i] + h0 * f0[i]);
    let Some(f1) = st.eval(t0 + h0, &y1) else {
        return h0 * T::lit(0.01);
    };
    let diff: [T; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = rms_scaled(&diff, y0, tol) / h0;
    let m = d1.max(d2);
    let h1 = if m <= T::lit(1e-15) {
        small.max(h0 * T::lit(1e-3))
    } else {
        (T::lit(0.01) / m).powf(T::lit(0.2))
    };
    (T::lit(100.0) * h0).min(h1).min(hmax)
}

fn dense_segment<T: Real, const N: usize>(
    y0: &[T; N],
    y1: &[T; N],
    k: &[[T; N]; 7],
    h: T,
    tab: &Tableau<T>,
    t0: T,
) -> Segment<T, N> {
    let mut r = [[T::zero(); N]; 5];
    for i in 0..N {
        let ydiff = y1[i] - y0[i];
        let bspl = h * k[0][i] - ydiff;
        r[0][i] = y0[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k[6][i] - bspl;
        let mut acc = T::zero();
        for s in 0..7 {
            acc = acc + tab.d[s] * k[s][i];
        }
        r[4][i] = h * acc;
    }
    Segment { t0, h, r }
}

fn locate_event<T: Real, const N: usize, E: Fn(&[T; N]) -> bool>(
    seg: &Segment<T, N>,
    ev: &E,
    t_lo: T,
    t_hi: T,
) -> (T, [T; N]) {
    let (mut lo, mut hi) = (t_lo, t_hi);
    let tol = T::lit(4.0) * T::epsilon() * T::one().max(t_hi.abs());
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) * T::half();
        if ev(&dense_eval(seg, mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, dense_eval(seg, hi))
}

/// Fixed-step Dormand–Prince (fifth-order solution), for order studies.
pub fn integrate_fixed<T, const N: usize, F>(rhs: F, y0: [T; N], t_span: (T, T), steps: usize) -> Option<[T; N]>
where
    T: Real,
    F: Fn(T, &[T; N]) -> Option<[T; N]>,
{
    let mut st = Stepper { rhs: &rhs, tab: Tableau::new(), evals: 0 };
    let h = (t_span.1 - t_span.0) / T::lit(steps as f64);
    let mut t = t_span.0;
    let mut y = y0;
    let mut k1 = st.eval(t, &y)?;
    for _ in 0..steps {
        let (y1, k) = st.step(t, &y, &k1, h)?;
        y = y1;
        k1 = k[6];
        t = t + h;
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    type NoEvent<const N: usize> = fn(&[f64; N]) -> bool;

    fn tol() -> ToleranceConfig<f64> {
        ToleranceConfig::default()
    }

    #[test]
    fn exponential() {
        let sol = integrate_ode(|_, y: &[f64; 1]| Some([y[0]]), [1.0], (0.0, 1.0), &tol(), None::<NoEvent<1>>);
        assert_eq!(sol.stop_reason, StopReason::TimeLimit);
        assert!((sol.final_state()[0] - std::f64::consts::E).abs() < 1e-8);
        assert_eq!(sol.t_end(), 1.0);
    }

    #[test]
    fn rotation() {
        let sol = integrate_ode(
            |_, y: &[f64; 2]| Some([-y[1], y[0]]),
            [1.0, 0.0],
            (0.0, std::f64::consts::PI),
            &tol(),
            None::<NoEvent<2>>,
        );
        let y = sol.final_state();
        assert!((y[0] + 1.0).abs() < 1e-7 && y[1].abs() < 1e-7);
    }

    #[test]
    fn event_crossing_time() {
        let sol = integrate_ode(
            |_, y: &[f64; 1]| Some([-y[0]]),
            [1.0],
            (0.0, 100.0),
            &tol(),
            Some(|y: &[f64; 1]| y[0].abs() < 1e-3),
        );
        assert_eq!(sol.stop_reason, StopReason::EventStop);
        assert!((sol.t_end() - 1000f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn dense_output_matches_knots_and_exact() {
        let sol = integrate_ode(|_, y: &[f64; 1]| Some([y[0]]), [1.0], (0.0, 2.0), &tol(), None::<NoEvent<1>>);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert_eq!(sol.interpolate(*t), *y);
        }
        for (t, y) in sol.sample_uniform(37) {
            assert!((y[0] - t.exp()).abs() < 1e-7 * t.exp());
        }
        assert!(sol.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn singular_field_stops() {
        // y' = 1/(1 - t) blows up at t = 1
        let sol = integrate_ode(
            |t, _y: &[f64; 1]| if t < 1.0 { Some([1.0 / (1.0 - t)]) } else { None },
            [0.0],
            (0.0, 2.0),
            &tol(),
            None::<NoEvent<1>>,
        );
        assert!(matches!(sol.stop_reason, StopReason::SingularityStop | StopReason::StepFailure));
        assert!(sol.t_end() < 1.0 && sol.t_end() > 0.99);
    }

    #[test]
    fn step_budget_reports_failure() {
        let cfg = ToleranceConfig { max_steps: 3, ..tol() };
        let sol = integrate_ode(
            |_, y: &[f64; 2]| Some([-y[1], y[0]]),
            [1.0, 0.0],
            (0.0, 100.0),
            &cfg,
            None::<NoEvent<2>>,
        );
        assert_eq!(sol.stop_reason, StopReason::StepFailure);
        assert!(sol.len() >= 1);
    }

    #[test]
    fn empirical_order_at_least_four_and_a_half() {
        let exact = 1f64.exp();
        let err = |n| (integrate_fixed(|_, y: &[f64; 1]| Some([y[0]]), [1.0], (0.0, 1.0), n).unwrap()[0] - exact).abs();
        let (e1, e2) = (err(8), err(16));
        let order = (e1 / e2).log2();
        assert!(order >= 4.5, "order {order}");
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let run = |rt: f64| {
            let cfg = ToleranceConfig { rel_tol: rt, abs_tol: rt * 1e-3, ..tol() };
            let s = integrate_ode(|_, y: &[f64; 1]| Some([y[0]]), [1.0], (0.0, 1.0), &cfg, None::<NoEvent<1>>);
            (s.final_state()[0] - 1f64.exp()).abs()
        };
        assert!(run(1e-6 / 32.0) < run(1e-6));
    }

    #[test]
    fn deterministic() {
        let f = |_: f64, y: &[f64; 3]| Some([y[1] * y[2], -y[0] * y[2], -0.51 * y[0] * y[1]]);
        let a = integrate_ode(f, [0.0, 1.0, 1.0], (0.0, 12.0), &tol(), None::<NoEvent<3>>);
        let b = integrate_ode(f, [0.0, 1.0, 1.0], (0.0, 12.0), &tol(), None::<NoEvent<3>>);
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
    }
}
