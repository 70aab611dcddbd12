use l2h::{checkpoint, features, world_file, FormatError};
use l2h_core::models::Checkpoint;
use l2h_core::oracle::{ClientBehavior, DiscreteWorld};
use l2h_core::seed::Rng;
use l2h_core::synth::{gen_data, GaussianMixtureSpec};
use l2h_core::{Architecture, CostParams, Label, RngSeed, ScoreModel};
use rand::Rng as _;

fn random_input(rng: &mut Rng, dim: usize) -> Vec<f64> {
    // wide dynamic range so low-order bits matter
    (0..dim)
        .map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-3..4)))
        .collect()
}

#[test]
fn checkpoint_files_are_forward_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngSeed(1).rng();
    for (i, arch) in [
        Architecture::Linear,
        Architecture::mlp1(),
        Architecture::Mlp1 { hidden: 7 },
    ]
    .into_iter()
    .enumerate()
    {
        let model = ScoreModel::init(arch, 3, 4, RngSeed(i as u64)).unwrap();
        let path = dir.path().join(format!("m{i}.ckpt"));
        let ck = Checkpoint::from_model(
            &model,
            4,
            Some(RngSeed(5)),
            Some(CostParams::new(0.1, 1.25).unwrap()),
        );
        checkpoint::save(&path, &ck).unwrap();
        let loaded = checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ck);
        let back = loaded.into_model().unwrap();
        let mut max_diff: f64 = 0.0;
        for _ in 0..100 {
            let x = random_input(&mut rng, 3);
            let (a, b) = (model.forward(&x).unwrap(), back.forward(&x).unwrap());
            for (u, v) in a.iter().zip(&b) {
                max_diff = max_diff.max((u - v).abs());
            }
        }
        assert_eq!(max_diff, 0.0);
    }
}

#[test]
fn frozen_flag_survives_round_trip() {
    let model = ScoreModel::init(Architecture::Linear, 2, 3, RngSeed(2))
        .unwrap()
        .frozen();
    let text = checkpoint::to_text(&Checkpoint::from_model(&model, 3, None, None));
    let mut back = checkpoint::from_text(&text).unwrap().into_model().unwrap();
    assert!(back.is_frozen());
    assert!(back.params_mut().is_err());
}

#[test]
fn checkpoint_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        checkpoint::load(&dir.path().join("missing")),
        Err(FormatError::Io { .. })
    ));
    let model = ScoreModel::init(Architecture::Linear, 2, 3, RngSeed(2)).unwrap();
    let text = checkpoint::to_text(&Checkpoint::from_model(&model, 3, None, None));
    for (from, to) in [
        ("format_version=1", "format_version=7"),
        ("architecture=linear", "architecture=conv"),
        ("output_dim=3", "output_dim=2"),
        ("frozen=false", "frozen=maybe"),
    ] {
        assert!(
            checkpoint::from_text(&text.replace(from, to)).is_err(),
            "{from} -> {to}"
        );
    }
    let without_params: String = text
        .lines()
        .filter(|l| !l.starts_with("params="))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(matches!(
        checkpoint::from_text(&without_params),
        Err(FormatError::Missing(_))
    ));
}

#[test]
fn feature_files_round_trip_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianMixtureSpec::ring(4, 3, 2.0, 0.7, (50, 10, 10)).unwrap();
    let (train, _, _) = gen_data(&spec, RngSeed(3)).unwrap();
    let path = dir.path().join("train.txt");
    features::save(&path, &train).unwrap();
    assert_eq!(features::load(&path).unwrap(), train);
}

#[test]
fn feature_file_errors_name_the_line() {
    let cases = [
        ("K=3 L=2\n1.0,2.0,1\n1.0,2.0\n", 3),
        ("K=3 L=2\n1.0,2.0,1\n1.0,abc,2\n", 3),
        ("K=3 L=2\n1.0,2.0,4\n", 2),
        ("K=3 L=2\n1.0,2.0,1.5\n", 2),
        ("K=3 L=2\n1.0,nan,1\n", 2),
        ("K=3 L=2\n1.0,2.0,3.0,1\n", 2),
    ];
    for (text, line) in cases {
        match features::parse(text) {
            Err(FormatError::Malformed { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(features::parse("K=x L=2\n").is_err());
    assert!(features::parse("K=3 L=2\n").is_err());
}

#[test]
fn world_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngSeed(4).rng();
    let world = DiscreteWorld::random(&mut rng, 7, 4, 2).unwrap();
    let client = ClientBehavior::Deterministic((0..7).map(|i| Label(i % 4)).collect());
    let path = dir.path().join("w.txt");
    world_file::save(&path, &world, &client).unwrap();
    let (w, c) = world_file::load(&path).unwrap();
    assert_eq!(w, world);
    assert_eq!(c, client);

    let text = std::fs::read_to_string(&path).unwrap();
    let mangled = text.replace("points=7", "points=8");
    assert!(world_file::from_text(&mangled).is_err());
    let prior_line = text.lines().find(|l| l.starts_with("prior=")).unwrap();
    assert!(world_file::from_text(&text.replace(prior_line, "prior=1,0,0,0,0,0,0.5")).is_err());
}
