//! Paired significance testing and inter-observer agreement.
//!
//! The two-sided paired t-test uses the Student t CDF evaluated through
//! the regularized incomplete beta function (continued fraction), and
//! reports the significance tier at the 0.05 / 0.01 / 0.001 thresholds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::{ClassId, LabelMaskSet};
use crate::metrics::dice;
use crate::scalar::Scalar;

/// Significance tier markers at the conventional thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTier {
    NotSignificant,
    /// p < 0.05
    P05,
    /// p < 0.01
    P01,
    /// p < 0.001
    P001,
}

impl SignificanceTier {
    pub fn from_p<S: Scalar>(p: S) -> Self {
        if p < S::from_f64_lit(0.001) {
            SignificanceTier::P001
        } else if p < S::from_f64_lit(0.01) {
            SignificanceTier::P01
        } else if p < S::from_f64_lit(0.05) {
            SignificanceTier::P05
        } else {
            SignificanceTier::NotSignificant
        }
    }

    /// Marker used in result tables: `*` / `°` / `•`.
    pub fn marker(self) -> &'static str {
        match self {
            SignificanceTier::NotSignificant => "",
            SignificanceTier::P05 => "*",
            SignificanceTier::P01 => "\u{00b0}",
            SignificanceTier::P001 => "\u{2022}",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedTestResult<S> {
    pub n: usize,
    pub mean_diff: S,
    pub t_statistic: S,
    pub p_value: S,
    pub significance: SignificanceTier,
    /// Zero variance of differences: the t statistic is not defined.
    pub degenerate: bool,
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via the Lentz continued
/// fraction, absolute error well under 1e-10 for the arguments used here.
pub fn betainc(x: f64, a: f64, b: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must be in [0,1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    // use the symmetry relation where the continued fraction converges fastest
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - betainc(1.0 - x, b, a)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided p-value of a Student t statistic with `dof` degrees of
/// freedom: `I_{ν/(ν+t²)}(ν/2, 1/2)`.
pub fn student_t_two_sided_p<S: Scalar>(t: S, dof: usize) -> S {
    let t = t.to_f64().expect("finite t");
    let nu = dof as f64;
    let x = nu / (nu + t * t);
    S::from_f64_lit(betainc(x, nu / 2.0, 0.5))
}

/// Two-sided paired t-test on per-image score pairs.
pub fn paired_t_test<S: Scalar>(a: &[S], b: &[S]) -> Result<PairedTestResult<S>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<S> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let nf = S::from_usize_lit(n);
    let mean = diffs.iter().copied().sum::<S>() / nf;
    let var = diffs
        .iter()
        .map(|&d| (d - mean) * (d - mean))
        .sum::<S>()
        / S::from_usize_lit(n - 1);
    let sd = var.sqrt();

    if sd == S::zero() {
        // all differences identical: t undefined
        let (t, p, degenerate) = if mean == S::zero() {
            (S::zero(), S::one(), false)
        } else if mean > S::zero() {
            (S::infinity(), S::zero(), true)
        } else {
            (S::neg_infinity(), S::zero(), true)
        };
        return Ok(PairedTestResult {
            n,
            mean_diff: mean,
            t_statistic: t,
            p_value: p,
            significance: SignificanceTier::from_p(p),
            degenerate,
        });
    }

    let t = mean / (sd / nf.sqrt());
    let p = student_t_two_sided_p(t, n - 1);
    Ok(PairedTestResult {
        n,
        mean_diff: mean,
        t_statistic: t,
        p_value: p,
        significance: SignificanceTier::from_p(p),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaResult<S> {
    /// `None` when chance agreement is 1 with imperfect observed agreement.
    pub kappa: Option<S>,
    pub degenerate: bool,
}

/// Cohen's κ from a 2x2 presence/absence contingency table
/// `table[a][b]`, where index 0 = present, 1 = absent.
pub fn kappa_from_table<S: Scalar>(table: [[usize; 2]; 2]) -> Result<KappaResult<S>> {
    let n: usize = table.iter().flatten().sum();
    if n == 0 {
        return Err(Error::InvalidArgument("empty contingency table".into()));
    }
    let nf = S::from_usize_lit(n);
    let p_o = S::from_usize_lit(table[0][0] + table[1][1]) / nf;
    let a_yes = S::from_usize_lit(table[0][0] + table[0][1]) / nf;
    let b_yes = S::from_usize_lit(table[0][0] + table[1][0]) / nf;
    let p_e = a_yes * b_yes + (S::one() - a_yes) * (S::one() - b_yes);
    if p_e == S::one() {
        return Ok(if p_o == S::one() {
            KappaResult {
                kappa: Some(S::one()),
                degenerate: true,
            }
        } else {
            KappaResult {
                kappa: None,
                degenerate: true,
            }
        });
    }
    Ok(KappaResult {
        kappa: Some((p_o - p_e) / (S::one() - p_e)),
        degenerate: false,
    })
}

/// Cohen's κ on paired presence/absence judgments.
pub fn cohens_kappa<S: Scalar>(rater_a: &[bool], rater_b: &[bool]) -> Result<KappaResult<S>> {
    if rater_a.len() != rater_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "rater series differ in length ({} vs {})",
            rater_a.len(),
            rater_b.len()
        )));
    }
    if rater_a.is_empty() {
        return Err(Error::InvalidArgument("no ratings".into()));
    }
    let mut table = [[0usize; 2]; 2];
    for (&a, &b) in rater_a.iter().zip(rater_b) {
        table[usize::from(!a)][usize::from(!b)] += 1;
    }
    kappa_from_table(table)
}

/// Agreement between one pair of observers for one class.
#[derive(Debug, Clone, Serialize)]
pub struct PairAgreement<S> {
    pub observer_a: usize,
    pub observer_b: usize,
    pub class: ClassId,
    pub mean_dsc: S,
    pub var_dsc: S,
    /// Fraction of images where the two presence/absence judgments differ.
    pub disagreement_rate: S,
    pub kappa: Option<S>,
    pub kappa_degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport<S> {
    pub pairwise: Vec<PairAgreement<S>>,
}

/// Inter-observer agreement over a common image series: pairwise DSC
/// mean/variance, presence disagreement rate, and Cohen's κ per class.
pub fn agreement_report<S: Scalar>(observers: &[Vec<LabelMaskSet>]) -> Result<AgreementReport<S>> {
    if observers.len() < 2 {
        return Err(Error::InvalidArgument(
            "agreement needs at least two observers".into(),
        ));
    }
    let n_images = observers[0].len();
    if observers.iter().any(|o| o.len() != n_images) {
        return Err(Error::DimensionMismatch(
            "observers annotated different image counts".into(),
        ));
    }

    let mut pairwise = Vec::new();
    for i in 0..observers.len() {
        for j in i + 1..observers.len() {
            for class in ClassId::ALL {
                let mut dscs = Vec::with_capacity(n_images);
                let mut pres_a = Vec::with_capacity(n_images);
                let mut pres_b = Vec::with_capacity(n_images);
                for (sa, sb) in observers[i].iter().zip(&observers[j]) {
                    let ma = sa.mask(class);
                    let mb = sb.mask(class);
                    dscs.push(dice::<S>(ma, mb)?);
                    pres_a.push(!ma.is_empty());
                    pres_b.push(!mb.is_empty());
                }
                let nf = S::from_usize_lit(n_images);
                let mean = dscs.iter().copied().sum::<S>() / nf;
                let var = if n_images > 1 {
                    dscs.iter().map(|&d| (d - mean) * (d - mean)).sum::<S>()
                        / S::from_usize_lit(n_images - 1)
                } else {
                    S::zero()
                };
                let disagree = pres_a
                    .iter()
                    .zip(&pres_b)
                    .filter(|(a, b)| a != b)
                    .count();
                let kappa = cohens_kappa::<S>(&pres_a, &pres_b)?;
                pairwise.push(PairAgreement {
                    observer_a: i,
                    observer_b: j,
                    class,
                    mean_dsc: mean,
                    var_dsc: var,
                    disagreement_rate: S::from_usize_lit(disagree) / nf,
                    kappa: kappa.kappa,
                    kappa_degenerate: kappa.degenerate,
                });
            }
        }
    }
    Ok(AgreementReport { pairwise })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Half-integer gamma by exact recurrence; independent of ln_gamma.
    fn gamma_half(mut x: f64) -> f64 {
        let mut acc = 1.0;
        while x > 1.0 {
            x -= 1.0;
            acc *= x;
        }
        if (x - 0.5).abs() < 1e-12 {
            acc * std::f64::consts::PI.sqrt()
        } else {
            assert!((x - 1.0).abs() < 1e-12);
            acc
        }
    }

    fn t_pdf(t: f64, nu: f64) -> f64 {
        let c = gamma_half((nu + 1.0) / 2.0)
            / ((nu * std::f64::consts::PI).sqrt() * gamma_half(nu / 2.0));
        c * (1.0 + t * t / nu).powf(-(nu + 1.0) / 2.0)
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }

    fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if (left + right - whole).abs() < 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive(f, a, m, left, eps / 2.0) + adaptive(f, m, b, right, eps / 2.0)
        }
    }

    // High-precision quadrature of the t density: two-sided p for |t|.
    fn quadrature_p(t: f64, nu: usize) -> f64 {
        let nu_f = nu as f64;
        let f = move |x: f64| t_pdf(x, nu_f);
        let a = 0.0;
        let b = t.abs();
        if b == 0.0 {
            return 1.0;
        }
        let body = adaptive(&f, a, b, simpson(&f, a, b), 1e-12);
        1.0 - 2.0 * body
    }

    #[test]
    fn identical_samples_are_degenerate_with_p_one() {
        let a = [0.8, 0.9, 0.7, 0.6];
        let r = paired_t_test::<f64>(&a, &a).unwrap();
        assert_eq!(r.mean_diff, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.degenerate);
        assert_eq!(r.significance, SignificanceTier::NotSignificant);
    }

    #[test]
    fn antisymmetric_differences_give_t_zero() {
        let a = [0.5, 0.5, 0.5, 0.5];
        let b = [0.4, 0.6, 0.4, 0.6];
        let r = paired_t_test::<f64>(&a, &b).unwrap();
        assert!(r.t_statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_nonzero_differences_are_degenerate_p_zero() {
        // differences are exactly 0.25 in binary floating point
        let a = [1.0, 0.5, 0.75];
        let b = [0.75, 0.25, 0.5];
        let r = paired_t_test::<f64>(&a, &b).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.significance, SignificanceTier::P001);
    }

    #[test]
    fn p_value_matches_quadrature_oracle() {
        let fixtures: &[(&[f64], &[f64])] = &[
            (&[0.9, 0.8, 0.85], &[0.7, 0.75, 0.8]),
            (
                &[0.91, 0.85, 0.78, 0.88, 0.95, 0.7, 0.82, 0.9, 0.76, 0.84],
                &[0.9, 0.8, 0.8, 0.85, 0.9, 0.72, 0.8, 0.88, 0.79, 0.8],
            ),
        ];
        for (a, b) in fixtures {
            let r = paired_t_test::<f64>(a, b).unwrap();
            let expect = quadrature_p(r.t_statistic, a.len() - 1);
            assert!(
                (r.p_value - expect).abs() < 1e-6,
                "p {} vs oracle {}",
                r.p_value,
                expect
            );
        }
    }

    #[test]
    fn t_test_is_antisymmetric_and_shift_invariant() {
        let a = [0.9, 0.7, 0.85, 0.6, 0.95];
        let b = [0.8, 0.75, 0.8, 0.65, 0.85];
        let r1 = paired_t_test::<f64>(&a, &b).unwrap();
        let r2 = paired_t_test::<f64>(&b, &a).unwrap();
        assert!((r1.t_statistic + r2.t_statistic).abs() < 1e-12);
        assert!((r1.p_value - r2.p_value).abs() < 1e-12);

        let shift = 0.03;
        let a2: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + shift).collect();
        let r3 = paired_t_test::<f64>(&a2, &b2).unwrap();
        assert!((r1.t_statistic - r3.t_statistic).abs() < 1e-9);
    }

    #[test]
    fn significance_tiers_match_thresholds() {
        assert_eq!(
            SignificanceTier::from_p(0.049),
            SignificanceTier::P05
        );
        assert_eq!(SignificanceTier::from_p(0.05), SignificanceTier::NotSignificant);
        assert_eq!(SignificanceTier::from_p(0.009), SignificanceTier::P01);
        assert_eq!(SignificanceTier::from_p(0.0009), SignificanceTier::P001);
    }

    #[test]
    fn betainc_boundary_values() {
        assert_eq!(betainc(0.0, 2.0, 3.0), 0.0);
        assert_eq!(betainc(1.0, 2.0, 3.0), 1.0);
        // I_x(1,1) = x
        for x in [0.1, 0.35, 0.9] {
            assert!((betainc(x, 1.0, 1.0) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_agreement_kappa_is_one() {
        let a = [true, false, true, true, false];
        let r = cohens_kappa::<f64>(&a, &a).unwrap();
        assert_eq!(r.kappa, Some(1.0));
        assert!(!r.degenerate);
    }

    #[test]
    fn chance_level_table_kappa_is_zero() {
        let r = kappa_from_table::<f64>([[25, 25], [25, 25]]).unwrap();
        assert_eq!(r.kappa, Some(0.0));
    }

    #[test]
    fn kappa_matches_hand_computed_fixture() {
        // table [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.25*0.3 + ... computed below
        let r = kappa_from_table::<f64>([[20, 5], [10, 15]]).unwrap();
        let p_o = 35.0 / 50.0;
        let p_e = (25.0 / 50.0) * (30.0 / 50.0) + (25.0 / 50.0) * (20.0 / 50.0);
        let expect = (p_o - p_e) / (1.0 - p_e);
        assert!((r.kappa.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn degenerate_marginals_are_flagged() {
        let all_yes = [true, true, true];
        let r = cohens_kappa::<f64>(&all_yes, &all_yes).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.kappa, Some(1.0));

        let other = [true, true, false];
        // rater a always says yes, b does not: p_e < 1, defined
        let r2 = cohens_kappa::<f64>(&all_yes, &other).unwrap();
        assert!(!r2.degenerate);
    }

    #[test]
    fn agreement_report_counts_presence_disagreements() {
        use crate::mask::Mask;
        let mut with = LabelMaskSet::empty(4, 4);
        with.mask_mut(ClassId::Papillation).set(1, 1, true);
        let without = LabelMaskSet::empty(4, 4);

        let obs_a = vec![with.clone(), with.clone(), without.clone(), without.clone()];
        let obs_b = vec![with.clone(), without.clone(), without.clone(), with.clone()];
        let report = agreement_report::<f64>(&[obs_a, obs_b]).unwrap();
        let pap = report
            .pairwise
            .iter()
            .find(|p| p.class == ClassId::Papillation)
            .unwrap();
        assert_eq!(pap.disagreement_rate, 0.5);
        // lesion masks all empty -> DSC 1 everywhere, zero variance
        let les = report
            .pairwise
            .iter()
            .find(|p| p.class == ClassId::Lesion)
            .unwrap();
        assert_eq!(les.mean_dsc, 1.0);
        assert_eq!(les.var_dsc, 0.0);
        let _ = Mask::empty(1, 1);
    }
}
