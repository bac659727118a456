//! Scalar homotopy schedules and the complementarity substitution pair.

use crate::error::{Error, Result};

/// Values and t-derivatives of the three scalar schedules at one t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleValues {
    pub rho: f64,
    pub theta: f64,
    pub c: f64,
    pub d_rho: f64,
    pub d_theta: f64,
    pub d_c: f64,
    /// log c = 1 - 1/rho, usable when c itself underflows.
    pub log_c: f64,
}

/// Piecewise schedules on (0, 2]. rho ramps up and saturates at 1 by t = 1;
/// theta stays 0 through t = 1 and reaches 1 at t = 2; c = exp(1 - 1/rho).
pub fn schedules(t: f64) -> Result<ScheduleValues> {
    if !(t > 0.0 && t <= 2.0) {
        return Err(Error::DomainError(format!("t = {}", t)));
    }
    let (rho, d_rho) = if t <= 0.5 {
        (4.0 / 3.0 * t, 4.0 / 3.0)
    } else if t <= 1.0 {
        let s = 1.0 - t;
        (1.0 - 4.0 / 3.0 * s * s, 8.0 / 3.0 * s)
    } else {
        (1.0, 0.0)
    };
    let (theta, d_theta) = if t <= 1.0 {
        (0.0, 0.0)
    } else if t <= 1.5 {
        let s = t - 1.0;
        (4.0 / 3.0 * s * s, 8.0 / 3.0 * s)
    } else {
        (4.0 / 3.0 * t - 5.0 / 3.0, 4.0 / 3.0)
    };
    let log_c = 1.0 - 1.0 / rho;
    let c = log_c.exp();
    let d_c = c * d_rho / (rho * rho);
    Ok(ScheduleValues {
        rho,
        theta,
        c,
        d_rho,
        d_theta,
        d_c,
        log_c,
    })
}

/// The substitution pair and its partial derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub struct PsiValues {
    pub psi1: f64,
    pub psi2: f64,
    pub d1_dv: f64,
    pub d2_dv: f64,
    pub d1_dr: f64,
    pub d2_dr: f64,
}

/// Complementarity substitution: psi1 = ((v + s)/2)^k and psi2 with -v,
/// where s = sqrt(v^2 + 4*tau0*r). The product psi1*psi2 equals
/// (tau0*r)^k identically; the smaller half-root is computed from the
/// product to avoid cancellation.
pub fn psi(v: f64, r: f64, tau0: f64, kappa0: f64) -> Result<PsiValues> {
    if r < 0.0 {
        return Err(Error::DomainError(format!("r = {}", r)));
    }
    if kappa0 <= 1.0 {
        return Err(Error::DomainError(format!("kappa0 = {}", kappa0)));
    }
    if tau0 <= 0.0 {
        return Err(Error::DomainError(format!("tau0 = {}", tau0)));
    }

    let prod = tau0 * r;
    let s = (v * v + 4.0 * prod).sqrt();
    let (u1, u2) = if v >= 0.0 {
        let u1 = (v + s) / 2.0;
        let u2 = if u1 > 0.0 { prod / u1 } else { 0.0 };
        (u1, u2)
    } else {
        let u2 = (s - v) / 2.0;
        let u1 = if u2 > 0.0 { prod / u2 } else { 0.0 };
        (u1, u2)
    };
    let psi1 = u1.powf(kappa0);
    let psi2 = u2.powf(kappa0);

    let (d1_dv, d2_dv, d1_dr, d2_dr) = if s > 0.0 {
        (
            kappa0 * psi1 / s,
            -kappa0 * psi2 / s,
            kappa0 * u1.powf(kappa0 - 1.0) * tau0 / s,
            kappa0 * u2.powf(kappa0 - 1.0) * tau0 / s,
        )
    } else {
        // v = 0, r = 0: the C1 extension in v has slope zero; the
        // r-partial is the one-sided limit (finite only for kappa0 >= 2)
        let dr = if (kappa0 - 2.0).abs() < 1e-12 {
            tau0
        } else if kappa0 > 2.0 {
            0.0
        } else {
            f64::INFINITY
        };
        (0.0, 0.0, dr, dr)
    };

    Ok(PsiValues {
        psi1,
        psi2,
        d1_dv,
        d2_dv,
        d1_dr,
        d2_dr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let s2 = schedules(2.0).unwrap();
        assert!((s2.rho - 1.0).abs() < 1e-15);
        assert!((s2.theta - 1.0).abs() < 1e-15);
        assert!((s2.c - 1.0).abs() < 1e-15);

        let s1 = schedules(1.0).unwrap();
        assert!((s1.rho - 1.0).abs() < 1e-15);
        assert!(s1.theta == 0.0);
        assert!((s1.c - 1.0).abs() < 1e-15);

        let shalf = schedules(0.5).unwrap();
        assert!((shalf.rho - 2.0 / 3.0).abs() < 1e-15);
        assert!(shalf.theta == 0.0);
        assert!((shalf.c - (-0.5f64).exp()).abs() < 1e-15);

        let sq = schedules(0.25).unwrap();
        assert!((sq.rho - 1.0 / 3.0).abs() < 1e-15);
        assert!((sq.c - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn domain_is_enforced() {
        assert!(schedules(0.0).is_err());
        assert!(schedules(-1.0).is_err());
        assert!(schedules(2.0 + 1e-12).is_err());
    }

    #[test]
    fn c1_at_breakpoints() {
        for b in [0.5, 1.0, 1.5] {
            let eps = 1e-10;
            let l = schedules(b - eps).unwrap();
            let r = schedules(b + eps).unwrap();
            for (a, c) in [
                (l.rho, r.rho),
                (l.theta, r.theta),
                (l.c, r.c),
                (l.d_rho, r.d_rho),
                (l.d_theta, r.d_theta),
                (l.d_c, r.d_c),
            ] {
                assert!((a - c).abs() < 1e-9, "at t={}: {} vs {}", b, a, c);
            }
        }
    }

    #[test]
    fn c_vanishes_at_zero() {
        let s = schedules(1e-6).unwrap();
        assert_eq!(s.c, 0.0); // underflow
        assert!(s.log_c < -700_000.0);
        assert_eq!(s.d_c, 0.0);
    }

    #[test]
    fn c_monotone_up_to_one() {
        let mut prev = 0.0;
        for k in 1..=100 {
            let t = k as f64 / 100.0;
            let c = schedules(t).unwrap().c;
            assert!(c >= prev);
            prev = c;
        }
        assert!((schedules(1.7).unwrap().c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_product_identity_and_specials() {
        let p = psi(0.0, 1.0, 1.0, 2.0).unwrap();
        assert!((p.psi1 - 1.0).abs() < 1e-15);
        assert!((p.psi2 - 1.0).abs() < 1e-15);

        // closed form: v = sqrt(0.5) - 1, tau0 = sqrt(0.5), r = 1 gives the
        // half-roots sqrt(0.5) and 1
        let v = 0.5f64.sqrt() - 1.0;
        let p = psi(v, 1.0, 0.5f64.sqrt(), 2.0).unwrap();
        assert!((p.psi1 - 0.5).abs() < 1e-14);
        assert!((p.psi2 - 1.0).abs() < 1e-14);

        // r = 0 reduces to one-sided powers
        let p = psi(0.7, 0.0, 1.0, 2.0).unwrap();
        assert!((p.psi1 - 0.49).abs() < 1e-15 && p.psi2 == 0.0);
        let p = psi(-0.7, 0.0, 1.0, 2.0).unwrap();
        assert!(p.psi1 == 0.0 && (p.psi2 - 0.49).abs() < 1e-15);
        let p = psi(0.0, 0.0, 1.0, 2.0).unwrap();
        assert!(p.d1_dv == 0.0 && p.d2_dv == 0.0);
    }

    #[test]
    fn psi_rejects_bad_domain() {
        assert!(psi(0.0, -1e-9, 1.0, 2.0).is_err());
        assert!(psi(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(psi(0.0, 1.0, 0.0, 2.0).is_err());
    }
}
