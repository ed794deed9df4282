//! Daily choice among candidate designs.

use crate::tmle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectorKind {
    /// Smallest mean held-out loss over the trailing `window` days.
    LossBased { window: usize },
    /// Largest targeted point estimate.
    TmlePoint,
    /// Largest lower 95% confidence bound.
    TmleCi,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::LossBased { .. } => "loss_based",
            SelectorKind::TmlePoint => "tmle_point",
            SelectorKind::TmleCi => "tmle_ci",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignEstimate {
    pub design: usize,
    pub psi: f64,
    pub sigma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Trailing mean held-out loss; `None` before any loss was recorded.
    pub window_loss: Option<f64>,
    pub degenerate: bool,
}

impl DesignEstimate {
    pub fn new(design: usize, psi: f64, sigma: f64, n: usize, window_loss: Option<f64>, degenerate: bool) -> Self {
        let (ci_lo, ci_hi) = tmle::confidence_interval(psi, sigma, n);
        DesignEstimate {
            design,
            psi,
            sigma,
            ci_lo,
            ci_hi,
            window_loss,
            degenerate,
        }
    }
}

/// Pick a design. Exact ties go to the incumbent, then to the lowest design id.
/// `None` when the selector has nothing to rank (no estimates, or no losses yet).
pub fn select_design(kind: SelectorKind, estimates: &[DesignEstimate], incumbent: Option<usize>) -> Option<usize> {
    let key = |e: &DesignEstimate| -> Option<f64> {
        match kind {
            SelectorKind::LossBased { .. } => e.window_loss.map(|l| -l),
            SelectorKind::TmlePoint => Some(e.psi),
            SelectorKind::TmleCi => Some(e.ci_lo),
        }
    };
    let mut best: Option<(f64, usize)> = None;
    for e in estimates {
        let Some(v) = key(e) else { continue };
        if v.is_nan() {
            continue;
        }
        best = match best {
            None => Some((v, e.design)),
            Some((bv, bd)) => {
                let better = v > bv
                    || (v == bv && (Some(e.design) == incumbent || (Some(bd) != incumbent && e.design < bd)));
                if better {
                    Some((v, e.design))
                } else {
                    Some((bv, bd))
                }
            }
        };
    }
    best.map(|(_, d)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn est(design: usize, psi: f64, sigma: f64, loss: Option<f64>) -> DesignEstimate {
        DesignEstimate::new(design, psi, sigma, 100, loss, false)
    }

    #[test]
    fn point_and_ci_disagree() {
        let e = [est(1, 0.10, 0.30, None), est(2, 0.09, 0.01, None)];
        assert_eq!(select_design(SelectorKind::TmlePoint, &e, None), Some(1));
        assert_eq!(select_design(SelectorKind::TmleCi, &e, None), Some(2));
    }

    #[test]
    fn dominant_design_wins_everywhere() {
        let e = [est(0, 0.2, 0.01, Some(0.1)), est(1, 0.1, 0.02, Some(0.3))];
        for k in [SelectorKind::TmlePoint, SelectorKind::TmleCi, SelectorKind::LossBased { window: 5 }] {
            assert_eq!(select_design(k, &e, Some(1)), Some(0));
        }
    }

    #[test]
    fn ties_prefer_incumbent_then_lowest() {
        let e = vec![est(0, 0.1, 0.0, None), est(3, 0.1, 0.0, None), est(5, 0.1, 0.0, None)];
        assert_eq!(select_design(SelectorKind::TmlePoint, &e, Some(5)), Some(5));
        assert_eq!(select_design(SelectorKind::TmlePoint, &e, Some(7)), Some(0));
        assert_eq!(select_design(SelectorKind::TmlePoint, &e, None), Some(0));
    }

    #[test]
    fn loss_selector_waits_for_losses() {
        let e = [est(0, 0.1, 0.0, None)];
        assert_eq!(select_design(SelectorKind::LossBased { window: 5 }, &e, None), None);
        assert_eq!(select_design(SelectorKind::TmleCi, &[], None), None);
    }
}
