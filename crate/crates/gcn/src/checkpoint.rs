//! JSON checkpoints holding both networks and the configuration that built them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeadKind, ModelConfig, Network};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    config: ModelConfig,
    node: Vec<TensorDoc>,
    edge: Vec<TensorDoc>,
}

fn dump(net: &Network) -> Vec<TensorDoc> {
    net.tensors()
        .into_iter()
        .map(|t| TensorDoc {
            name: t.name,
            shape: t.shape,
            data: t.data.to_vec(),
        })
        .collect()
}

fn restore(config: &ModelConfig, kind: HeadKind, docs: Vec<TensorDoc>) -> Result<Network> {
    let mut net = Network::new(config, kind)?;
    let mut by_name: BTreeMap<String, TensorDoc> = BTreeMap::new();
    for d in docs {
        if by_name.contains_key(&d.name) {
            return Err(Error::Checkpoint(format!("{} tensor `{}` appears twice", kind.name(), d.name)));
        }
        by_name.insert(d.name.clone(), d);
    }
    for t in net.tensors_mut() {
        let doc = by_name
            .remove(&t.name)
            .ok_or_else(|| Error::Checkpoint(format!("{} tensor `{}` is missing", kind.name(), t.name)))?;
        if doc.shape != t.shape || doc.data.len() != t.data.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensor `{}` has shape {:?} with {} values, expected {:?}",
                kind.name(),
                t.name,
                doc.shape,
                doc.data.len(),
                t.shape
            )));
        }
        if doc.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{} tensor `{}` holds non-finite values", kind.name(), t.name)));
        }
        t.data.copy_from_slice(&doc.data);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected {} tensor `{extra}`", kind.name())));
    }
    Ok(net)
}

/// Serialises both networks. They must share one configuration.
pub fn save_checkpoint(node: &Network, edge: &Network) -> Result<String> {
    if node.kind != HeadKind::Node || edge.kind != HeadKind::Edge {
        return Err(Error::Checkpoint("expected a node network and an edge network".into()));
    }
    if node.config != edge.config {
        return Err(Error::Checkpoint("node and edge networks have different configurations".into()));
    }
    let doc = CheckpointDoc {
        schema_version: CHECKPOINT_VERSION,
        config: node.config.clone(),
        node: dump(node),
        edge: dump(edge),
    };
    let mut text = serde_json::to_string(&doc).map_err(|e| Error::Checkpoint(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Rebuilds both networks from the configuration stored in the document.
pub fn load_checkpoint(text: &str) -> Result<(Network, Network)> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if doc.schema_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}, expected {CHECKPOINT_VERSION}",
            doc.schema_version
        )));
    }
    doc.config.validate()?;
    let node = restore(&doc.config, HeadKind::Node, doc.node)?;
    let edge = restore(&doc.config, HeadKind::Edge, doc.edge)?;
    Ok((node, edge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predict;
    use moflp_core::dataset::FeatureVariant;
    use moflp_core::generator::{generate_instance, GenConfig};

    fn nets(seed: u64) -> (Network, Network) {
        let cfg = ModelConfig {
            hidden: 10,
            l_gcn: 2,
            l_mlp: 2,
            variant: FeatureVariant::A,
            seed,
            ..Default::default()
        };
        (Network::new(&cfg, HeadKind::Node).unwrap(), Network::new(&cfg, HeadKind::Edge).unwrap())
    }

    #[test]
    fn round_trip_predicts_identically() {
        let (mut node, edge) = nets(4);
        node.layers[0].bn_node.running_mean[3] = 0.123456789012345;
        let inst = generate_instance(&GenConfig::with_scale(4, 7, 2)).unwrap();
        let before = predict(&inst, &node, &edge).unwrap();
        let (n2, e2) = load_checkpoint(&save_checkpoint(&node, &edge).unwrap()).unwrap();
        assert_eq!((&n2, &e2), (&node, &edge));
        assert_eq!(predict(&inst, &n2, &e2).unwrap(), before);
    }

    #[test]
    fn tampered_shape_names_tensor() {
        let (node, edge) = nets(1);
        let text = save_checkpoint(&node, &edge).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let t = v["edge"]
            .as_array_mut()
            .unwrap()
            .iter_mut()
            .find(|t| t["name"] == "conv1.q")
            .unwrap();
        t["shape"] = serde_json::json!([5, 20]);
        match load_checkpoint(&v.to_string()) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("conv1.q"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stored_config_wins() {
        let (node, edge) = nets(77);
        let (n2, _) = load_checkpoint(&save_checkpoint(&node, &edge).unwrap()).unwrap();
        assert_eq!(n2.config.seed, 77);
        assert_eq!(n2.config.hidden, 10);
    }

    #[test]
    fn version_and_pairing_checks() {
        let (node, edge) = nets(0);
        let text = save_checkpoint(&node, &edge).unwrap().replacen("\"schema_version\":1", "\"schema_version\":2", 1);
        assert!(matches!(load_checkpoint(&text), Err(Error::Checkpoint(_))));
        assert!(save_checkpoint(&edge, &node).is_err());
        let (other, _) = nets(1);
        let (_, edge_b) = nets(0);
        assert!(save_checkpoint(&other, &edge_b).is_err());
    }
}
