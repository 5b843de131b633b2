use contagion_cva::contagion::{GeneratorSpec, IntensityTable, Multipliers};
use contagion_cva::engine::*;
use contagion_cva::settlement::SettlementMode;
use contagion_cva::{Convention, RankRule, TenorGrid};

fn spec(p: f64) -> GeneratorSpec {
    GeneratorSpec::from_survival(10, p, 1.5, Multipliers::new(1.0, 0.8, 1.3)).unwrap()
}

fn grid() -> TenorGrid {
    TenorGrid::uniform(3.0, 36).unwrap()
}

fn engine(p: f64, c: Convention, rule: RankRule) -> PricingEngine {
    PricingEngine::new(&spec(p), &grid(), 0.45, EngineOptions::new(c, rule)).unwrap()
}

fn spread(p: f64, c: Convention, rule: RankRule, s: &TreeSettlement) -> f64 {
    engine(p, c, rule).par_spread_bilateral(s).unwrap().spread
}

#[test]
fn rank_one_rule_reproduces_convention_a() {
    for p in [0.95, 0.8] {
        for r2 in [0.1, 0.4, 0.9] {
            let s = TreeSettlement::uncollateralized(0.4, r2);
            let a = spread(p, Convention::A, RankRule::risk_free(1), &s);
            for c in [Convention::B, Convention::C, Convention::CPrime] {
                let x = spread(p, c, RankRule::risk_free(1), &s);
                assert!((x - a).abs() <= 1e-10, "p {p} R2 {r2} {c}: {x} vs {a}");
            }
        }
    }
}

#[test]
fn full_collateral_gives_first_default_free_spread() {
    let s = TreeSettlement {
        mode: SettlementMode::Collateral,
        r1: 0.4,
        r2: 0.4,
        collateral_fraction: 1.0,
        lockup: 0.0,
        investor_settlement: true,
    };
    for c in Convention::ALL {
        let e = engine(0.95, c, RankRule::risk_free(3));
        let bilateral = e.par_spread_bilateral(&s).unwrap().spread;
        let free = e.par_spread_first_default_free().unwrap().spread;
        let annuity = e.riskfree().legs(contagion_cva::cds::Survivors::BOTH, 0).unwrap().annuity[0][0];
        let tol = 2.0 * PRICE_TOLERANCE / annuity;
        assert!((bilateral - free).abs() <= tol, "{c}: {bilateral} vs {free}");
    }
}

#[test]
fn adjustment_sign_follows_spread_gap() {
    for p in [0.95, 0.8] {
        for c in Convention::ALL {
            for r2 in [0.1, 0.9] {
                let r = engine(p, c, RankRule::risk_free(2)).cva(&TreeSettlement::uncollateralized(0.4, r2)).unwrap();
                assert_eq!(r.cva > 0.0, r.spread < r.riskfree_spread, "{r:?}");
                assert!(r.price_at_spread.abs() <= PRICE_TOLERANCE);
            }
        }
    }
}

#[test]
fn spreads_rise_with_counterparty_recovery() {
    for p in [0.95, 0.8] {
        for c in Convention::ALL {
            let e = engine(p, c, RankRule::risk_free(3));
            let s: Vec<f64> = [0.01, 0.2, 0.4, 0.6, 0.9]
                .iter()
                .map(|&r2| e.par_spread_bilateral(&TreeSettlement::uncollateralized(0.4, r2)).unwrap().spread)
                .collect();
            assert!(s.windows(2).all(|w| w[1] >= w[0]), "{c}: {s:?}");
        }
    }
}

#[test]
fn successive_rank_changes_shrink() {
    let s = TreeSettlement::uncollateralized(0.4, 0.4);
    for p in [0.95, 0.8] {
        for c in [Convention::B, Convention::C, Convention::CPrime] {
            let v: Vec<f64> = (1..=5).map(|n| spread(p, c, RankRule::risk_free(n), &s)).collect();
            let d: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            assert!(d.windows(2).all(|w| w[1] <= w[0]), "{c} p {p}: {v:?}");
        }
    }
}

#[test]
fn more_collateral_raises_the_spread() {
    for c in Convention::ALL {
        let e = engine(0.8, c, RankRule::risk_free(2));
        let mut last = f64::MIN;
        for theta in [0.0, 0.25, 0.5, 1.0] {
            let s = TreeSettlement {
                mode: SettlementMode::Collateral,
                r1: 0.4,
                r2: 0.4,
                collateral_fraction: theta,
                lockup: 0.0,
                investor_settlement: false,
            };
            let k = e.par_spread_bilateral(&s).unwrap().spread;
            assert!(k >= last - 1e-9, "{c} θ {theta}: {k} < {last}");
            last = k;
        }
    }
}

#[test]
fn every_margin_mode_prices() {
    let e = engine(0.95, Convention::B, RankRule::risk_free(3));
    let free = e.par_spread_bilateral(&TreeSettlement::uncollateralized(0.4, 0.4)).unwrap().spread;
    for mode in [SettlementMode::Collateral, SettlementMode::LockUp, SettlementMode::Segregated, SettlementMode::LockUpSegregated] {
        let s = TreeSettlement { mode, r1: 0.4, r2: 0.4, collateral_fraction: 0.5, lockup: 0.005, investor_settlement: true };
        let r = e.cva(&s).unwrap();
        assert!(r.spread.is_finite() && r.spread > 0.0, "{mode:?}");
        assert!((r.spread - free).abs() < 0.02, "{mode:?} {}", r.spread);
    }
}

#[test]
fn negligible_intensities_leave_no_adjustment() {
    let spec = GeneratorSpec::new(10, IntensityTable::Geometric { initial: 1e-12, factor: 1.5 }, Multipliers::new(1.0, 0.8, 1.3)).unwrap();
    let e = PricingEngine::new(&spec, &grid(), 0.45, EngineOptions::new(Convention::B, RankRule::risk_free(3))).unwrap();
    let s = TreeSettlement::uncollateralized(0.4, 0.4);
    let tree = e.build_tree(0.01, &s).unwrap();
    assert!(e.cva_direct(0.01, &s, &tree).unwrap().abs() < 1e-12);
}

#[test]
fn systemic_replacements_are_priced() {
    let s = TreeSettlement::uncollateralized(0.4, 0.4);
    for c in [Convention::B, Convention::C, Convention::CPrime] {
        let o = EngineOptions::new(c, RankRule::risk_free(3)).with_systemic_replacements(true);
        let e = PricingEngine::new(&spec(0.8), &grid(), 0.45, o).unwrap();
        let k = e.par_spread_bilateral(&s).unwrap().spread;
        let plain = spread(0.8, c, RankRule::risk_free(3), &s);
        assert!(k.is_finite() && (k - plain).abs() < 0.05 * plain, "{c}: {k} vs {plain}");
    }
}

/// Raising truncation coverage from 0.95 to 0.9999 must move no Table-1
/// spread by 1e-5 or more.
#[test]
fn truncation_coverage_barely_matters() {
    let mut worst = (0.0f64, String::new());
    for c in Convention::ALL {
        for r2 in [0.9, 0.4, 0.01] {
            let s = TreeSettlement::uncollateralized(0.4, r2);
            let mk = |cov: f64| {
                let o = EngineOptions::new(c, RankRule::risk_free(3)).with_coverage(cov);
                PricingEngine::new(&spec(0.95), &grid(), 0.45, o).unwrap().par_spread_bilateral(&s).unwrap().spread
            };
            let d = (mk(0.95) - mk(0.9999)).abs();
            if d > worst.0 {
                worst = (d, format!("{c} R2 {r2}"));
            }
        }
    }
    println!("largest coverage effect {:.3e} at {}", worst.0, worst.1);
    assert!(worst.0 < 1e-5, "largest coverage effect {:.3e} at {}", worst.0, worst.1);
}
