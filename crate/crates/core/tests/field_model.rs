use hierex::field::{default_gamma, overlap};
use hierex::{beta_c, centering, intensity, Barrier, Error, Interval, ModelParams};

fn p(k: u32, m: u32) -> ModelParams {
    ModelParams::new(k, m).unwrap()
}

#[test]
fn rem_and_brw_endpoints() {
    // K = 1: a_N = β_c N − ln N/(2β_c).
    let rem = p(1, 20);
    let want = beta_c() * 20.0 - 20f64.ln() / (2.0 * beta_c());
    assert!((centering(&rem).unwrap() - want).abs() < 1e-12);
    // K = N: α = 1 and the correction is 3/(2β_c) ln N.
    let brw = p(12, 1);
    assert!((brw.alpha() - 1.0).abs() < 1e-15);
    let want = beta_c() * 12.0 - 3.0 * 12f64.ln() / (2.0 * beta_c());
    assert!((centering(&brw).unwrap() - want).abs() < 1e-12);
}

#[test]
fn invalid_parameters() {
    assert!(matches!(ModelParams::new(0, 4), Err(Error::InvalidParams(_))));
    assert!(matches!(ModelParams::new(2, 0), Err(Error::InvalidParams(_))));
    assert!(ModelParams::new(2, 64).is_err());
    assert!(centering(&p(1, 1)).is_err());
}

#[test]
fn barrier_tables_and_limits() {
    let q = p(4, 4);
    let u = Barrier::Envelope.table(&q).unwrap();
    let e = Barrier::lowered_default(&q).unwrap().table(&q).unwrap();
    assert_eq!(u.len(), 5);
    assert_eq!(u[0], e[0]);
    assert_eq!(u[4], e[4]);
    let drop = 16f64.powf(default_gamma(&q));
    for k in 1..4 {
        assert!((u[k] - e[k] - drop).abs() < 1e-12);
    }
    let too_high = Barrier::Lowered {
        gamma: (1.0 - q.alpha()) / 2.0,
    };
    assert!(matches!(too_high.validate(&q), Err(Error::InvalidBarrier(_))));
    let shifted = Barrier::Shifted {
        offsets: vec![0.0, -1.0, -1.0, -1.0, 0.5],
    };
    assert!(shifted.validate(&q).is_ok());
    assert!(shifted.validate_for_mean_limit(&q).is_err());
}

#[test]
fn barrier_serde_round_trip() {
    for b in [
        Barrier::Envelope,
        Barrier::Lowered { gamma: 0.2 },
        Barrier::Shifted {
            offsets: vec![0.0, -2.0, 0.0],
        },
    ] {
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<Barrier>(&json).unwrap(), b);
    }
    assert_eq!(
        serde_json::to_string(&Barrier::Lowered { gamma: 0.25 }).unwrap(),
        r#"{"kind":"lowered","gamma":0.25}"#
    );
}

#[test]
fn intensity_of_half_line_and_windows() {
    let half = Interval::above(0.0).unwrap();
    assert!((intensity(&half) - 1.0 / (beta_c() * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
    assert!(Interval::new(1.0, 1.0).is_err());
    assert!(Interval::new(f64::NEG_INFINITY, 0.0).is_err());
}

#[test]
fn overlap_validation() {
    let q = p(3, 1);
    assert_eq!(overlap(&[1, 2, 1], &[1, 2, 2], &q).unwrap(), 2);
    assert_eq!(overlap(&[1, 2, 1], &[1, 2, 1], &q).unwrap(), 3);
    assert!(overlap(&[1, 2], &[1, 2, 1], &q).is_err());
    assert!(overlap(&[1, 3, 1], &[1, 2, 1], &q).is_err());
}
