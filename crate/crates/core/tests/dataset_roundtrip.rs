use isac_ident::dataset::{generate_dataset, load_samples, save_samples, split_by_sequence, Mode, ScenarioConfig};
use isac_ident::identify::{predict_all, restore, DnnHyper, DnnSolver, Solver, SolverKind};
use isac_ident::nn::{read_checkpoint, write_checkpoint};

fn small() -> ScenarioConfig {
    ScenarioConfig {
        seed: 9,
        n_sequences: 5,
        min_samples_per_sequence: 30,
        max_samples_per_sequence: 40,
        ..ScenarioConfig::default()
    }
}

#[test]
fn saved_dataset_loads_identically() {
    let samples = generate_dataset(&small(), Mode::Fast).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.csv");
    save_samples(&samples, &path).unwrap();
    assert_eq!(load_samples(&path).unwrap(), samples);
}

#[test]
fn fitted_solvers_survive_serialization() {
    let cfg = small();
    let samples = generate_dataset(&cfg, Mode::Fast).unwrap();
    let split = split_by_sequence(&samples, 0.8, cfg.seed).unwrap();
    let pointing = cfg.comm.codebook().unwrap().pointing_angles;
    let hyper = DnnHyper { epochs: 5, ..DnnHyper::default() };

    for kind in SolverKind::ALL {
        let (fitted, restored): (Box<dyn Solver>, Box<dyn Solver>) = if kind == SolverKind::Dnn {
            let mut d = DnnSolver::new(pointing.len(), hyper.clone());
            d.fit(&split.train).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(d.model.as_ref().unwrap(), &mut bytes).unwrap();
            let model = read_checkpoint(bytes.as_slice()).unwrap();
            let json: serde_json::Value = serde_json::from_str(&d.params_json().to_string()).unwrap();
            let r = restore(kind, &pointing, &json, Some(model)).unwrap();
            (Box::new(d), r)
        } else {
            let mut s = kind.build(&pointing, &hyper);
            s.fit(&split.train).unwrap();
            let json: serde_json::Value = serde_json::from_str(&s.params_json().to_string()).unwrap();
            let r = restore(kind, &pointing, &json, None).unwrap();
            (s, r)
        };
        assert_eq!(
            predict_all(fitted.as_ref(), &split.test).unwrap(),
            predict_all(restored.as_ref(), &split.test).unwrap(),
            "{kind}"
        );
    }
}
