//! Step-size (`alpha_k`) and scaling (`gamma_k`) sequences, plus continuous
//! time-rescaling factors `alpha(tau)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepRule {
    /// `L a^2 = (1 - a) g + mu a`, explicit gamma update.
    Nag,
    /// `L a^2 = g (1 + a)`, implicit gamma update.
    Oag1,
    /// `L a^2 = g_{k+1}` with the implicit gamma update, i.e.
    /// `L a^3 + L a^2 - mu a - g = 0`.
    Mu0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMode {
    /// `(g + mu a) / (1 + a)`
    Implicit,
    /// `(1 - a) g + mu a`
    Explicit,
}

impl StepRule {
    pub fn gamma_mode(self) -> GammaMode {
        match self {
            StepRule::Nag => GammaMode::Explicit,
            StepRule::Oag1 | StepRule::Mu0 => GammaMode::Implicit,
        }
    }

    /// Value of the defining polynomial at `alpha` (zero at the solution).
    pub fn residual(self, alpha: f64, gamma: f64, mu: f64, lip: f64) -> f64 {
        let a2 = alpha * alpha;
        match self {
            StepRule::Nag => lip * a2 - (1.0 - alpha) * gamma - mu * alpha,
            StepRule::Oag1 => lip * a2 - gamma * (1.0 + alpha),
            StepRule::Mu0 => lip * a2 * (1.0 + alpha) - mu * alpha - gamma,
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepRule::Nag => "nag",
            StepRule::Oag1 => "oag1",
            StepRule::Mu0 => "mu0",
        })
    }
}

impl FromStr for StepRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nag" => Ok(StepRule::Nag),
            "oag1" => Ok(StepRule::Oag1),
            "mu0" => Ok(StepRule::Mu0),
            _ => Err(Error::invalid(format!("unknown step rule {s:?} (valid: nag, oag1, mu0)"))),
        }
    }
}

fn check_constants(gamma: f64, mu: f64, lip: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(lip > 0.0 && mu >= 0.0 && mu <= lip) {
        return Err(Error::invalid(format!("need 0 <= mu <= lip, lip > 0 (mu={mu}, lip={lip})")));
    }
    Ok(())
}

pub fn solve_alpha(rule: StepRule, gamma: f64, mu: f64, lip: f64) -> Result<f64> {
    check_constants(gamma, mu, lip)?;
    Ok(match rule {
        StepRule::Nag => {
            // L a^2 + p a - g = 0, p = g - mu; pick the form without cancellation
            let p = gamma - mu;
            let root = p.mul_add(p, 4.0 * lip * gamma).sqrt();
            let a = if p >= 0.0 { 2.0 * gamma / (p + root) } else { (root - p) / (2.0 * lip) };
            a.min(1.0)
        }
        StepRule::Oag1 => (gamma + gamma.mul_add(gamma, 4.0 * gamma * lip).sqrt()) / (2.0 * lip),
        StepRule::Mu0 => solve_mu0_cubic(gamma, mu, lip),
    })
}

/// Positive root of `q(a) = L a^3 + L a^2 - mu a - g`. `q` is convex on
/// `a > 0` with `q(0) < 0`, so the root is unique; Newton from `sqrt(g/L)`
/// inside a maintained bracket, bisecting whenever a step leaves it.
fn solve_mu0_cubic(gamma: f64, mu: f64, lip: f64) -> f64 {
    let q = |a: f64| lip * a * a * (1.0 + a) - mu * a - gamma;
    let dq = |a: f64| lip * a * (3.0 * a + 2.0) - mu;
    let mut lo = 0.0;
    let mut hi = ((mu + gamma) / lip).sqrt().max(1.0);
    let mut a = (gamma / lip).sqrt().clamp(lo, hi);
    for _ in 0..50 {
        let qa = q(a);
        if qa == 0.0 {
            return a;
        }
        if qa > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let d = dq(a);
        let mut next = if d > 0.0 { a - qa / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() <= 1e-14 * a {
            return next;
        }
        a = next;
    }
    a
}

pub fn gamma_next(mode: GammaMode, gamma: f64, alpha: f64, mu: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(alpha > 0.0) {
        return Err(Error::invalid(format!("need gamma > 0 and alpha > 0 (gamma={gamma}, alpha={alpha})")));
    }
    match mode {
        GammaMode::Implicit => Ok((gamma + mu * alpha) / (1.0 + alpha)),
        GammaMode::Explicit => {
            if alpha > 1.0 {
                return Err(Error::invalid(format!("explicit gamma update needs alpha <= 1, got {alpha}")));
            }
            Ok((1.0 - alpha) * gamma + mu * alpha)
        }
    }
}

/// Sequences `alpha_0..alpha_{K-1}`, `gamma_0..gamma_K` and the products
/// `lambda_k` (kept as logarithms so long runs do not underflow).
#[derive(Clone, Debug)]
pub struct Schedule {
    pub rule: StepRule,
    pub mu: f64,
    pub lip: f64,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `ln lambda_k`, `k = 0..=K`; `lambda_k = prod_{i<k} (1 - a_i)` for NAG and
    /// `prod_{i<k} 1/(1 + a_i)` otherwise.
    pub log_products: Vec<f64>,
}

pub fn generate(rule: StepRule, gamma0: f64, mu: f64, lip: f64, k: usize) -> Result<Schedule> {
    check_constants(gamma0, mu, lip)?;
    if k == 0 {
        return Err(Error::invalid("schedule length K must be at least 1"));
    }
    let mode = rule.gamma_mode();
    let mut alphas = Vec::with_capacity(k);
    let mut gammas = Vec::with_capacity(k + 1);
    let mut logs = Vec::with_capacity(k + 1);
    gammas.push(gamma0);
    logs.push(0.0);
    let mut g = gamma0;
    let mut lg = 0.0;
    for _ in 0..k {
        let a = solve_alpha(rule, g, mu, lip)?;
        let g1 = gamma_next(mode, g, a, mu)?;
        lg += match mode {
            GammaMode::Explicit => (-a).ln_1p(),
            GammaMode::Implicit => -a.ln_1p(),
        };
        alphas.push(a);
        gammas.push(g1);
        logs.push(lg);
        if !(g1 > 0.0) {
            // gamma hits zero only when mu = 0 and alpha = 1, which cannot
            // happen for lip > 0; keep the sequence consistent regardless
            return Err(Error::invalid(format!("gamma became non-positive ({g1})")));
        }
        g = g1;
    }
    Ok(Schedule { rule, mu, lip, alphas, gammas, log_products: logs })
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }
    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
    pub fn gamma0(&self) -> f64 {
        self.gammas[0]
    }
    pub fn product(&self, k: usize) -> f64 {
        self.log_products[k].exp()
    }
    pub fn products(&self) -> Vec<f64> {
        self.log_products.iter().map(|l| l.exp()).collect()
    }

    /// Lower bound on every `alpha_k`: `sqrt(min{gamma_1, mu}/L)` for NAG,
    /// `sqrt(min{gamma_0, mu}/L)` for OAG1. None for MU0.
    pub fn alpha_lower_bound(&self) -> Option<f64> {
        let g = match self.rule {
            StepRule::Nag => self.gammas[1],
            StepRule::Oag1 => self.gammas[0],
            StepRule::Mu0 => return None,
        };
        Some((g.min(self.mu) / self.lip).sqrt())
    }

    /// `ln` of the proved bound on `lambda_k`.
    ///
    /// NAG: `min{4L/(sqrt(g0) k + 2 sqrt(L))^2, (1 - sqrt(min{g1, mu}/L))^k}`;
    /// OAG1: `min{4L/(...)^2, (1 + sqrt(min{g0, mu}/L))^-k}`;
    /// MU0 (only for `mu = 0`): `4(sqrt L + sqrt g0)^2 / (sqrt(g0) k + 2 sqrt L + 2 sqrt g0)^2`.
    pub fn log_product_bound(&self, k: usize) -> Option<f64> {
        let kf = k as f64;
        let (sl, sg0) = (self.lip.sqrt(), self.gammas[0].sqrt());
        let sub = (4.0 * self.lip).ln() - 2.0 * (sg0 * kf + 2.0 * sl).ln();
        match self.rule {
            StepRule::Nag | StepRule::Oag1 => {
                let r = self.alpha_lower_bound().unwrap();
                let lin = match self.rule {
                    StepRule::Nag => kf * (-r).ln_1p(),
                    _ => -kf * r.ln_1p(),
                };
                // 0 * ln(0) at k = 0 is NaN; the bound there is 1
                let lin = if k == 0 { 0.0 } else { lin };
                Some(sub.min(lin))
            }
            StepRule::Mu0 => {
                if self.mu != 0.0 {
                    return None;
                }
                Some(2.0 * (2.0 * (sl + sg0)).ln() - 2.0 * (sg0 * kf + 2.0 * sl + 2.0 * sg0).ln())
            }
        }
    }

    /// `max_k (lambda_k / bound_k - 1)`, computed in log space; <= 0 means
    /// the bound holds.
    pub fn worst_product_excess(&self) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.log_products.len() {
            let b = self.log_product_bound(k)?;
            let lp = self.log_products[k];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            worst = worst.max((lp - b).exp_m1());
        }
        Some(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RescaleKind {
    /// `alpha(t) = sqrt(g0) b / (sqrt(g0) t + b)`, `0 < b <= 2`.
    Rational { gamma0: f64, b: f64 },
    /// Solution of `2 alpha' = mu - alpha^2`, `alpha(0) = sqrt(g0)`.
    ClosedForm { gamma0: f64 },
}

/// Time-rescaling factor `alpha(tau)` with `2 alpha' <= mu - alpha^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleFactor {
    pub kind: RescaleKind,
    pub mu: f64,
}

pub fn rescale_factor(kind: RescaleKind, mu: f64) -> Result<RescaleFactor> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be >= 0, got {mu}")));
    }
    let gamma0 = match kind {
        RescaleKind::Rational { gamma0, b } => {
            if !(b > 0.0 && b <= 2.0) {
                return Err(Error::invalid(format!("rational rescale needs 0 < b <= 2, got {b}")));
            }
            gamma0
        }
        RescaleKind::ClosedForm { gamma0 } => gamma0,
    };
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::invalid(format!("gamma0 must be positive, got {gamma0}")));
    }
    Ok(RescaleFactor { kind, mu })
}

impl RescaleFactor {
    pub fn gamma0(&self) -> f64 {
        match self.kind {
            RescaleKind::Rational { gamma0, .. } | RescaleKind::ClosedForm { gamma0 } => gamma0,
        }
    }

    /// `(sqrt(mu) - sqrt(g0)) / (sqrt(mu) + sqrt(g0))`; zero for the rational kind.
    pub fn alpha_mu(&self) -> f64 {
        let (sm, sg) = (self.mu.sqrt(), self.gamma0().sqrt());
        (sm - sg) / (sm + sg)
    }

    fn closed_form_b(&self) -> Option<f64> {
        match self.kind {
            RescaleKind::Rational { b, .. } => Some(b),
            RescaleKind::ClosedForm { .. } if self.mu == 0.0 => Some(2.0),
            RescaleKind::ClosedForm { .. } => None,
        }
    }

    pub fn evaluate(&self, tau: f64) -> f64 {
        let sg = self.gamma0().sqrt();
        match self.closed_form_b() {
            Some(b) => sg * b / (sg * tau + b),
            None => {
                let s = self.mu.sqrt();
                let e = self.alpha_mu() * (-s * tau).exp();
                s * (1.0 - e) / (1.0 + e)
            }
        }
    }

    pub fn derivative(&self, tau: f64) -> f64 {
        let sg = self.gamma0().sqrt();
        match self.closed_form_b() {
            Some(b) => -self.gamma0() * b / (sg * tau + b).powi(2),
            None => {
                let s = self.mu.sqrt();
                let e = self.alpha_mu() * (-s * tau).exp();
                2.0 * self.mu * e / (1.0 + e).powi(2)
            }
        }
    }

    /// `int_0^tau alpha`.
    pub fn integral(&self, tau: f64) -> f64 {
        let sg = self.gamma0().sqrt();
        match self.closed_form_b() {
            Some(b) => b * (sg * tau / b).ln_1p(),
            None => {
                let s = self.mu.sqrt();
                let am = self.alpha_mu();
                let e = am * (-s * tau).exp();
                s * tau + 2.0 * (e.ln_1p() - am.ln_1p())
            }
        }
    }

    /// Damping coefficient of the rescaled second-order equation,
    /// `(mu + alpha^2 - alpha') / alpha`.
    pub fn damping(&self, tau: f64) -> f64 {
        let a = self.evaluate(tau);
        (self.mu + a * a - self.derivative(tau)) / a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solve_alpha_examples() {
        assert_eq!(solve_alpha(StepRule::Nag, 0.25, 0.25, 1.0).unwrap(), 0.5);
        // alpha^2 + alpha - 1 = 0
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((solve_alpha(StepRule::Nag, 1.0, 0.0, 1.0).unwrap() - golden).abs() < 1e-15);
        assert!((solve_alpha(StepRule::Oag1, 1.0, 0.0, 1.0).unwrap() - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert_eq!(solve_alpha(StepRule::Nag, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(solve_alpha(StepRule::Nag, 0.0, 0.0, 1.0).is_err());
        assert!(solve_alpha(StepRule::Oag1, -1.0, 0.0, 1.0).is_err());
        // mu = 0: a^3 + a^2 = 1 has root 0.7548776662466927
        let a = solve_alpha(StepRule::Mu0, 1.0, 0.0, 1.0).unwrap();
        assert!((a - 0.754_877_666_246_692_7).abs() < 1e-15);
    }

    #[test]
    fn gamma_next_examples() {
        for mode in [GammaMode::Implicit, GammaMode::Explicit] {
            assert_eq!(gamma_next(mode, 0.3, 0.7, 0.3).unwrap(), 0.3);
        }
        assert_eq!(gamma_next(GammaMode::Implicit, 1.0, 1.0, 0.0).unwrap(), 0.5);
        assert_eq!(gamma_next(GammaMode::Explicit, 1.0, 0.5, 0.0).unwrap(), 0.5);
        assert!(gamma_next(GammaMode::Explicit, 1.0, 1.5, 0.0).is_err());
        assert!(gamma_next(GammaMode::Implicit, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn generate_constant_regime() {
        let s = generate(StepRule::Nag, 0.25, 0.25, 1.0, 10).unwrap();
        for k in 0..10 {
            assert_eq!(s.alphas[k], 0.5);
            assert_eq!(s.gammas[k + 1], 0.25);
            assert!((s.product(k) - 0.5f64.powi(k as i32)).abs() <= 1e-16);
        }
    }

    #[test]
    fn generate_sublinear_bound() {
        let lip = 1.0;
        let s = generate(StepRule::Nag, 4.0 * lip, 0.0, lip, 300).unwrap();
        for k in 0..=300 {
            let b = 4.0 * lip / ((4.0 * lip).sqrt() * k as f64 + 2.0 * lip.sqrt()).powi(2);
            assert!(s.product(k) <= b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn oag1_linear_bound_direct_recursion() {
        let (mu, lip) = (0.01, 1.0);
        let s = generate(StepRule::Oag1, mu, mu, lip, 50).unwrap();
        // independent recursion for prod 1/(1+a) with a solving L a^2 = mu (1 + a)
        let a = (mu + (mu * mu + 4.0 * mu * lip).sqrt()) / (2.0 * lip);
        for k in 0..=50 {
            let direct = (1.0 + a).powi(-(k as i32));
            assert!((s.product(k) - direct).abs() <= 1e-13 * direct);
            assert!(s.product(k) <= (1.0 + (mu / lip).sqrt()).powi(-(k as i32)) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn log_products_survive_underflow() {
        let s = generate(StepRule::Oag1, 1.0, 1.0, 1.0, 2000).unwrap();
        assert_eq!(s.product(2000), 0.0);
        assert!(s.log_products[2000].is_finite() && s.log_products[2000] < -700.0);
        assert!(s.worst_product_excess().unwrap() <= 1e-12);
    }

    #[test]
    fn mu0_rule_matches_implicit_gamma() {
        let s = generate(StepRule::Mu0, 1.0, 0.0, 3.0, 100).unwrap();
        for k in 0..100 {
            let (a, g, g1) = (s.alphas[k], s.gammas[k], s.gammas[k + 1]);
            assert!((3.0 * a * a - g1).abs() <= 1e-13 * g1);
            assert!((g1 * (1.0 + a) - g).abs() <= 1e-13 * g);
        }
        assert!(s.worst_product_excess().unwrap() <= 1e-12);
    }

    #[test]
    fn rescale_examples() {
        let r = rescale_factor(RescaleKind::Rational { gamma0: 4.0, b: 2.0 }, 0.0).unwrap();
        for &t in &[0.0, 0.5, 3.0, 100.0] {
            assert!((r.evaluate(t) - 2.0 / (t + 1.0)).abs() < 1e-15);
            assert!((r.damping(t) - 3.0 / (t + 1.0)).abs() < 1e-14);
        }
        let c = rescale_factor(RescaleKind::ClosedForm { gamma0: 0.49 }, 0.49).unwrap();
        for &t in &[0.0, 1.0, 50.0] {
            assert_eq!(c.evaluate(t), 0.7);
            assert!((c.damping(t) - 1.4).abs() < 1e-15);
        }
        for kind in [RescaleKind::Rational { gamma0: 2.0, b: 1.5 }, RescaleKind::ClosedForm { gamma0: 2.0 }] {
            for mu in [0.0, 0.3, 5.0] {
                if let Ok(r) = rescale_factor(kind, mu) {
                    assert!((r.evaluate(0.0) - 2f64.sqrt()).abs() < 1e-15);
                }
            }
        }
        assert!(rescale_factor(RescaleKind::Rational { gamma0: 1.0, b: 2.5 }, 0.0).is_err());
        assert!(rescale_factor(RescaleKind::Rational { gamma0: 1.0, b: 0.0 }, 0.0).is_err());
    }

    #[test]
    fn rescale_differential_inequality_on_grid() {
        let cases = [
            rescale_factor(RescaleKind::Rational { gamma0: 4.0, b: 2.0 }, 0.0).unwrap(),
            rescale_factor(RescaleKind::Rational { gamma0: 0.3, b: 0.7 }, 0.2).unwrap(),
            rescale_factor(RescaleKind::ClosedForm { gamma0: 9.0 }, 0.04).unwrap(),
            rescale_factor(RescaleKind::ClosedForm { gamma0: 0.01 }, 2.0).unwrap(),
            rescale_factor(RescaleKind::ClosedForm { gamma0: 1.0 }, 0.0).unwrap(),
        ];
        let h = 1e-5;
        for r in &cases {
            for i in 0..=20_000 {
                let t = i as f64 * 1e-3;
                let a = r.evaluate(t);
                assert!(a > 0.0);
                let fd = (r.evaluate(t + h) - r.evaluate(t - h)) / (2.0 * h);
                assert!(2.0 * fd - (r.mu - a * a) <= 1e-8, "{r:?} t={t}");
                assert!((fd - r.derivative(t)).abs() <= 1e-6 * (1.0 + r.derivative(t).abs()));
            }
            // integral against trapezoid quadrature
            let n = 200_000;
            let t_end = 20.0;
            let dt = t_end / n as f64;
            let quad: f64 = (0..n).map(|i| 0.5 * dt * (r.evaluate(i as f64 * dt) + r.evaluate((i + 1) as f64 * dt))).sum();
            assert!((quad - r.integral(t_end)).abs() < 1e-7, "{r:?}: {quad} vs {}", r.integral(t_end));
        }
    }

    fn triple() -> impl Strategy<Value = (f64, f64, f64)> {
        (-4.0f64..4.0, 0.0f64..1.0, -2.0f64..2.0, prop::bool::ANY).prop_map(|(lg, fr, ll, zero_mu)| {
            let lip = 10f64.powf(ll);
            let mu = if zero_mu { 0.0 } else { lip * fr * fr };
            (10f64.powf(lg), mu, lip)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn schedule_invariants((g0, mu, lip) in triple()) {
            for rule in [StepRule::Nag, StepRule::Oag1] {
                let s = generate(rule, g0, mu, lip, 500).unwrap();
                let lb = s.alpha_lower_bound().unwrap();
                for k in 0..500 {
                    let a = s.alphas[k];
                    let (g, g1) = (s.gammas[k], s.gammas[k + 1]);
                    prop_assert!(g1 > 0.0 && a > 0.0);
                    if rule == StepRule::Nag { prop_assert!(a <= 1.0); }
                    prop_assert!(a >= lb * (1.0 - 1e-15), "alpha {a} < bound {lb}");
                    let res = rule.residual(a, g, mu, lip);
                    // scale by the largest term; for OAG1 with gamma >> L, alpha >> 1
                    let scale = lip.max(g).max(lip * a * a);
                    prop_assert!(res.abs() <= 1e-13 * scale, "{rule}: residual {res:e}, alpha {a}, gamma {g}");
                    // gamma converges to mu, so rounding eventually sits on the boundary
                    let eps = 1e-15;
                    if g0 > mu {
                        prop_assert!(mu * (1.0 - eps) <= g1 && g1 <= g * (1.0 + eps));
                    } else if g0 < mu {
                        prop_assert!(g * (1.0 - eps) <= g1 && g1 <= mu * (1.0 + eps));
                    } else {
                        prop_assert!((g1 - mu).abs() <= eps * mu);
                    }
                }
                prop_assert!(s.worst_product_excess().unwrap() <= 1e-12);
            }
        }
    }
}
