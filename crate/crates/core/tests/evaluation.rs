use std::collections::BTreeMap;

use intrinsic_core::data::{
    gen_judgements, gen_mondrian, gen_real_pair, JudgementScene, MondrianConfig,
};
use intrinsic_core::image::{IntrinsicTriplet, RealSceneGroup};
use intrinsic_core::metrics::{
    evaluate, mpre, si_lmse, si_mse_metric, whdr, EvalData, EvalError, Metric, MetricConfig,
    MetricSummary, NetDecomposer,
};
use intrinsic_core::network::{IntrinsicNet, NetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    synthetic: Vec<(String, IntrinsicTriplet)>,
    real: Vec<RealSceneGroup>,
    judgements: Vec<JudgementScene>,
}

fn cfg(seed: u64) -> MondrianConfig {
    MondrianConfig {
        width: 16,
        height: 16,
        seed,
        ..MondrianConfig::default()
    }
}

fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Fixture {
        synthetic: (0..2)
            .map(|s| (format!("s{s}"), gen_mondrian(&cfg(s))))
            .collect(),
        real: (0..2)
            .map(|s| gen_real_pair(&cfg(10 + s), 2).unwrap().0)
            .collect(),
        judgements: (0..2)
            .map(|s| {
                let t = gen_mondrian(&cfg(20 + s));
                JudgementScene {
                    id: format!("j{s}"),
                    judgements: gen_judgements(&t.reflectance, 30, 0.10, &mut rng),
                    image: t.input,
                    reflectance: None,
                }
            })
            .collect(),
    }
}

fn net() -> IntrinsicNet {
    IntrinsicNet::new(NetConfig {
        levels: 2,
        base_channels: 4,
        seed: 1,
        ..NetConfig::default()
    })
    .unwrap()
}

#[test]
fn report_matches_direct_recomputation() {
    let f = fixture();
    let net = net();
    let config = MetricConfig {
        mpre_resize: None,
        ..MetricConfig::default()
    };
    let data = EvalData {
        synthetic: &f.synthetic,
        real: &f.real,
        judgements: &f.judgements,
    };
    let report = evaluate(
        &NetDecomposer {
            net: &net,
            filter: None,
        },
        data,
        &Metric::ALL,
        &config,
    )
    .unwrap();

    let mut expect: BTreeMap<Metric, BTreeMap<String, f64>> = BTreeMap::new();
    for (id, t) in &f.synthetic {
        let (r, s) = net.decompose(&t.input).unwrap();
        for (part, est, gt) in [
            ("reflectance", &r, &t.reflectance),
            ("shading", &s, &t.shading),
        ] {
            let key = format!("{id}/{part}");
            expect
                .entry(Metric::Simse)
                .or_default()
                .insert(key.clone(), si_mse_metric(est, gt).unwrap());
            expect
                .entry(Metric::Silmse)
                .or_default()
                .insert(key, si_lmse(est, gt, &config).unwrap());
        }
    }
    for g in &f.real {
        let group: Vec<_> = g
            .images
            .iter()
            .map(|img| {
                let (r, s) = net.decompose(img).unwrap();
                (img.clone(), r, s)
            })
            .collect();
        expect
            .entry(Metric::Mpre)
            .or_default()
            .insert(g.id.clone(), mpre(&group).unwrap());
    }
    for j in &f.judgements {
        let (r, _) = net.decompose(&j.image).unwrap();
        expect
            .entry(Metric::Whdr)
            .or_default()
            .insert(j.id.clone(), whdr(&r, &j.judgements, 0.10).unwrap());
    }

    assert_eq!(
        report.keys().collect::<Vec<_>>(),
        expect.keys().collect::<Vec<_>>()
    );
    for (metric, values) in expect {
        let summary = &report[&metric];
        assert_eq!(
            summary.per_scene.keys().collect::<Vec<_>>(),
            values.keys().collect::<Vec<_>>()
        );
        for (k, v) in &values {
            assert!((summary.per_scene[k] - v).abs() <= 1e-12, "{metric} {k}");
        }
        let mean = values.values().sum::<f64>() / values.len() as f64;
        assert!((summary.mean - mean).abs() <= 1e-12);
    }
}

#[test]
fn missing_section_is_named() {
    let f = fixture();
    let data = EvalData {
        synthetic: &f.synthetic,
        real: &[],
        judgements: &f.judgements,
    };
    match evaluate(
        &NetDecomposer {
            net: &net(),
            filter: None,
        },
        data,
        &[Metric::Mpre],
        &MetricConfig::default(),
    ) {
        Err(EvalError::Config(msg)) => assert!(msg.contains("real"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn summary_median_and_mean() {
    let values: BTreeMap<String, f64> = [("a", 1.0), ("b", 5.0), ("c", 2.0), ("d", 4.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let s = MetricSummary::from_values(values).unwrap();
    assert_eq!(s.mean, 3.0);
    assert_eq!(s.median, 3.0);
    assert!(MetricSummary::from_values(BTreeMap::new()).is_err());
}

#[test]
fn metric_names_parse() {
    for m in Metric::ALL {
        assert_eq!(m.name().parse::<Metric>().unwrap(), m);
    }
    assert!("psnr".parse::<Metric>().is_err());
}
