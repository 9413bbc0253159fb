use gradood::format;
use gradood::linalg::Matrix;
use gradood::micronet::{self, ModelSpec, ParamVector, SampleBatch};
use proptest::prelude::*;

fn batch_strategy() -> impl Strategy<Value = SampleBatch> {
    (1usize..20, 1usize..6, any::<bool>()).prop_flat_map(|(n, d, labeled)| {
        (
            prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n * d),
            prop::collection::vec(0usize..5, n),
        )
            .prop_map(move |(v, l)| {
                let m = Matrix::from_vec(n, d, v.into_iter().map(f64::from).collect()).unwrap();
                SampleBatch::new(m, labeled.then_some(l)).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn dataset_binary_and_csv_round_trip(b in batch_strategy()) {
        let bytes = format::encode_dataset(&b).unwrap();
        prop_assert_eq!(&format::decode_dataset(std::path::Path::new("p"), &bytes).unwrap(), &b);
        prop_assert_eq!(format::dataset_from_csv(&format::dataset_to_csv(&b)).unwrap(), b);
    }
}

#[test]
fn model_meta_describes_the_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::mlp(&[3, 7, 2]).unwrap();
    let mut params = ParamVector::init_uniform(&spec, 5);
    // payloads are f32; trained parameters are already on that grid
    params.snap_to_f32();
    let path = dir.path().join("m.gso");
    micronet::save_model(&spec, &params, 5, &path, toml::Table::new()).unwrap();
    let meta = format::read_meta(&path).unwrap();
    assert_eq!(meta["artifact"].as_str(), Some("model"));
    assert_eq!(micronet::load_manifest(&path).unwrap().spec, spec);
    let (s2, p2) = micronet::load_model(&path).unwrap();
    assert_eq!((s2, p2), (spec, params));
    // only the artifact and its sidecar remain: writes go through a renamed temp file
    let mut names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["m.gso", "m.gso.meta"]);
}

#[test]
fn model_params_must_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::mlp(&[3, 7, 2]).unwrap();
    let path = dir.path().join("m.gso");
    micronet::save_model(&spec, &ParamVector::init_uniform(&spec, 1), 1, &path, toml::Table::new()).unwrap();
    // swap in a sidecar for a different architecture
    let other = dir.path().join("o.gso");
    let spec2 = ModelSpec::mlp(&[3, 5, 2]).unwrap();
    micronet::save_model(&spec2, &ParamVector::init_uniform(&spec2, 1), 1, &other, toml::Table::new()).unwrap();
    std::fs::copy(format::meta_path(&other), format::meta_path(&path)).unwrap();
    assert_eq!(micronet::load_model(&path).unwrap_err().exit_code(), 2);
}
