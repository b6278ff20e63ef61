use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Layer, QNetwork};
use crate::error::{Error, Result};
use crate::mdp::{ActionSet, Normalization, STATE_DIM};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk model: everything needed to turn a bulletin into a headway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub layer_sizes: Vec<usize>,
    /// One row-major `outputs x inputs` array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub action_set: ActionSet,
    pub normalization: Normalization,
    /// Free-form record of how the model was produced (config, seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn new(net: &QNetwork, action_set: &ActionSet, normalization: &Normalization) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layer_sizes: net.layer_sizes(),
            weights: net.layers().iter().map(|l| l.weights.clone()).collect(),
            biases: net.layers().iter().map(|l| l.biases.clone()).collect(),
            action_set: action_set.clone(),
            normalization: *normalization,
            provenance: None,
        }
    }

    pub fn network(&self) -> Result<QNetwork> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes[0] != STATE_DIM {
            return Err(Error::Model(format!(
                "layer_sizes {sizes:?} must start with {STATE_DIM}"
            )));
        }
        if *sizes.last().expect("len >= 2") != self.action_set.len() {
            return Err(Error::Model(format!(
                "output width {} does not match action set of {}",
                sizes.last().expect("len >= 2"),
                self.action_set.len()
            )));
        }
        if self.weights.len() != sizes.len() - 1 || self.biases.len() != sizes.len() - 1 {
            return Err(Error::Model(
                "weight/bias arrays do not match layer_sizes".into(),
            ));
        }
        let layers = sizes
            .windows(2)
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(w, (weights, biases))| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: weights.clone(),
                biases: biases.clone(),
            })
            .collect();
        QNetwork::from_layers(layers)
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(model)?)?;
    Ok(())
}

/// Reads and validates a model. With `expected_actions`, the file's action
/// set must match it exactly.
pub fn load_model(
    path: &Path,
    expected_actions: Option<&ActionSet>,
) -> Result<(ModelFile, QNetwork)> {
    let text = fs::read_to_string(path)?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    let net = model.network()?;
    if let Some(a) = expected_actions {
        if a != &model.action_set {
            return Err(Error::Model(format!(
                "model has {} actions {:?}, config expects {} {:?}",
                model.action_set.len(),
                model.action_set.targets(),
                a.len(),
                a.targets()
            )));
        }
    }
    Ok((model, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::{init_network, Hyperparams};
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn sample_model() -> (ModelFile, QNetwork) {
        let actions = ActionSet::default();
        let net = init_network(&Hyperparams::default(), actions.len(), 17).unwrap();
        (
            ModelFile::new(&net, &actions, &Normalization::default()),
            net,
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let (model, net) = sample_model();
        save_model(&path, &model).unwrap();
        let (loaded, net2) = load_model(&path, Some(&ActionSet::default())).unwrap();
        assert_eq!(loaded, model);
        assert!(net
            .parameters()
            .zip(net2.parameters())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut rng = stream(5, Stream::Exploration);
        for _ in 0..100 {
            let s: Vec<f64> = (0..STATE_DIM).map(|_| rng.random()).collect();
            assert_eq!(net.forward(&s), net2.forward(&s));
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let text = serde_json::to_string(&sample_model().0).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path, None), Err(Error::Model(_))));
    }

    #[test]
    fn action_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &sample_model().0).unwrap();
        let other = ActionSet::linear(8, 40.0).unwrap();
        assert!(matches!(
            load_model(&path, Some(&other)),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn bad_version_and_shape_are_rejected() {
        let (mut m, _) = sample_model();
        m.schema_version = 99;
        assert!(m.network().is_err());
        let (mut m, _) = sample_model();
        m.weights[1].pop();
        assert!(m.network().is_err());
        let (mut m, _) = sample_model();
        m.layer_sizes[0] = 4;
        assert!(m.network().is_err());
    }
}
