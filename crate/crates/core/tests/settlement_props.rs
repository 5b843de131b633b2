use contagion_cva::settlement::*;
use proptest::prelude::*;

fn aligned(m: f64, c: f64) -> (f64, f64) {
    if m >= 0.0 {
        (0.0, c)
    } else {
        (c, 0.0)
    }
}

const MODES: [SettlementMode; 5] = [
    SettlementMode::Uncollateralized,
    SettlementMode::Collateral,
    SettlementMode::LockUp,
    SettlementMode::Segregated,
    SettlementMode::LockUpSegregated,
];

fn party() -> impl Strategy<Value = Party> {
    prop_oneof![Just(Party::Investor), Just(Party::Counterparty)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn full_recovery_returns_mark(m in -1e3f64..1e3, c in 0f64..1e3, v in -1e2f64..1e2, p in party()) {
        let (c1, c2) = aligned(m, c);
        for mode in MODES {
            let t = SettlementTerms::uncollateralized(1.0, 1.0).with_collateral(c1, c2).with_lockup(v).with_mode(mode);
            prop_assert_eq!(settle(m, &t, p).unwrap(), m);
        }
    }

    #[test]
    fn full_collateral_returns_mark(m in -1e3f64..1e3, r1 in 0f64..=1.0, r2 in 0f64..=1.0, p in party()) {
        let (c1, c2) = if m >= 0.0 { (0.0, m) } else { (-m, 0.0) };
        let t = SettlementTerms::uncollateralized(r1, r2).with_collateral(c1, c2).with_mode(SettlementMode::Collateral);
        prop_assert_eq!(settle(m, &t, p).unwrap(), m);
    }

    #[test]
    fn counterparty_settlement_is_monotone(m in -1e3f64..1e3, c in 0f64..1e3, dc in 0f64..1e2, r2 in 0f64..0.9, dr in 0f64..0.1, v in -1e2f64..1e2) {
        for mode in MODES {
            let (c1, c2) = aligned(m, c);
            let base = SettlementTerms::uncollateralized(0.3, r2).with_collateral(c1, c2).with_lockup(v).with_mode(mode);
            let s0 = settle(m, &base, Party::Counterparty).unwrap();
            let more_recovery = SettlementTerms { r2: r2 + dr, ..base };
            prop_assert!(settle(m, &more_recovery, Party::Counterparty).unwrap() >= s0);
            if m >= 0.0 {
                let more_collateral = base.with_collateral(0.0, c + dc);
                prop_assert!(settle(m, &more_collateral, Party::Counterparty).unwrap() >= s0);
            }
        }
    }

    #[test]
    fn modes_reduce_when_features_are_off(m in -1e3f64..1e3, c in 0f64..1e3, r1 in 0f64..=1.0, r2 in 0f64..=1.0, p in party()) {
        let (c1, c2) = aligned(m, c);
        let t = SettlementTerms::uncollateralized(r1, r2).with_collateral(c1, c2);
        let s = |mode: SettlementMode, t: SettlementTerms| settle(m, &t.with_mode(mode), p).unwrap();
        prop_assert_eq!(s(SettlementMode::LockUp, t), s(SettlementMode::Collateral, t));
        prop_assert_eq!(s(SettlementMode::LockUpSegregated, t), s(SettlementMode::Segregated, t));
        let bare = t.with_collateral(0.0, 0.0);
        prop_assert_eq!(s(SettlementMode::Collateral, bare), s(SettlementMode::Uncollateralized, t));
    }

    #[test]
    fn loss_given_default_matches_settlement(m in -1e3f64..1e3, c in 0f64..1e3, r1 in 0f64..=1.0, r2 in 0f64..=1.0) {
        let (c1, c2) = aligned(m, c);
        let bare = SettlementTerms::uncollateralized(r1, r2);
        let loss = lgd_symmetric(m, &bare, LgdVariant::Uncollateralized, LgdSide::Loss);
        prop_assert_eq!(settle_uncollateralized(m, &bare, Party::Counterparty), m - loss);
        let gain = lgd_symmetric(m, &bare, LgdVariant::Uncollateralized, LgdSide::Gain);
        prop_assert_eq!(settle_uncollateralized(m, &bare, Party::Investor), m + gain);
        let t = bare.with_collateral(c1, c2);
        let loss = lgd_symmetric(m, &t, LgdVariant::Collateralized, LgdSide::Loss);
        prop_assert_eq!(settle_collateralized(m, &t, Party::Counterparty).unwrap(), m - loss);
        let loss = lgd_symmetric(m, &t, LgdVariant::Segregated, LgdSide::Loss);
        prop_assert_eq!(settle_segregated(m, &t, Party::Counterparty).unwrap(), m - loss);
        let gain = lgd_symmetric(m, &t, LgdVariant::Segregated, LgdSide::Gain);
        prop_assert_eq!(settle_segregated(m, &t, Party::Investor).unwrap(), m + gain);
    }

    #[test]
    fn misaligned_collateral_is_rejected(m in 1e-3f64..1e3, c in 1e-3f64..1e3, p in party()) {
        let t = SettlementTerms::uncollateralized(0.4, 0.4).with_collateral(c, 0.0).with_mode(SettlementMode::Collateral);
        prop_assert!(settle(m, &t, p).is_err());
        let t = SettlementTerms::uncollateralized(0.4, 0.4).with_collateral(0.0, c).with_mode(SettlementMode::Segregated);
        prop_assert!(settle(-m, &t, p).is_err());
    }
}
