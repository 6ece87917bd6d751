//! Binary checkpoints for networks (`MINN`) and mixture entropy models
//! (`MIGM`), plus a directory layout for a whole fitted estimator.
//!
//! Parameters are stored as little-endian `f32`. Mixture parameters are
//! trained in `f64`, so a reloaded mixture matches the original to single
//! precision only.

use std::io::{ErrorKind, Read, Write};
use std::path::Path;

use migate_core::discriminators::{ClassPrior, DiscriminatorSet, Head};
use migate_core::gmm::{GmmEntropyModel, GmmLayout};
use migate_core::nn::{Activation, DenseLayout, DenseNet, LayerShape, TrainReport};
use migate_core::pid::{FittedEstimator, ModalityTransform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::{read_json, write_json};

pub const NET_MAGIC: [u8; 4] = *b"MINN";
pub const GMM_MAGIC: [u8; 4] = *b"MIGM";
pub const VERSION: u16 = 1;

fn take<const N: usize>(r: &mut impl Read, context: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncation {
            context: context.to_string(),
        },
        _ => Error::io("<source>", e),
    })?;
    Ok(b)
}

fn take_u32(r: &mut impl Read, context: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r, context)?))
}

fn take_f32s(r: &mut impl Read, n: usize, context: &str) -> Result<Vec<f32>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(take(r, context)?))).collect()
}

fn header(r: &mut impl Read, magic: [u8; 4], name: &'static str) -> Result<()> {
    let found: [u8; 4] = take(r, "magic")?;
    if found != magic {
        return Err(Error::Format { expected: name, found });
    }
    let version = u16::from_le_bytes(take(r, "version")?);
    if version != VERSION {
        return Err(Error::Version { format: name, version });
    }
    Ok(())
}

fn put(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes).map_err(|e| Error::io("<sink>", e))
}

/// `MINN`, version, layer count `u32`, per layer `(inputs u32, outputs u32,
/// activation u8)` with 0 = identity and 1 = ReLU, then every parameter.
pub fn write_net(net: &DenseNet<f32>, w: &mut impl Write) -> Result<()> {
    let layers = net.layout().layers();
    let mut buf = Vec::with_capacity(16 + 9 * layers.len() + 4 * net.params().len());
    buf.extend_from_slice(&NET_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        buf.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        buf.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        buf.push(match l.activation {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
    }
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    put(w, &buf)
}

pub fn read_net(r: &mut impl Read) -> Result<DenseNet<f32>> {
    header(r, NET_MAGIC, "MINN")?;
    let count = take_u32(r, "layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let context = format!("layer {i}");
        let inputs = take_u32(r, &context)? as usize;
        let outputs = take_u32(r, &context)? as usize;
        let activation = match take::<1>(r, &context)?[0] {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(Error::Corruption(format!("layer {i}: activation code {other}"))),
        };
        layers.push(LayerShape {
            inputs,
            outputs,
            activation,
        });
    }
    let layout = DenseLayout::new(layers)?;
    let params = take_f32s(r, layout.num_params(), "parameters")?;
    Ok(DenseNet::from_params(layout, params)?)
}

/// `MIGM`, version, `K u32`, `d u32`, then the mixture logits, means and raw
/// (pre-softplus) packed lower-triangular scale entries.
pub fn write_gmm(model: &GmmEntropyModel, w: &mut impl Write) -> Result<()> {
    let layout = model.layout();
    let mut buf = Vec::with_capacity(16 + 4 * layout.num_params());
    buf.extend_from_slice(&GMM_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(layout.k as u32).to_le_bytes());
    buf.extend_from_slice(&(layout.d as u32).to_le_bytes());
    for &p in model.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    put(w, &buf)
}

pub fn read_gmm(r: &mut impl Read) -> Result<GmmEntropyModel> {
    header(r, GMM_MAGIC, "MIGM")?;
    let k = take_u32(r, "component count")? as usize;
    let d = take_u32(r, "dimension")? as usize;
    let layout = GmmLayout::new(k, d)?;
    let params = take_f32s(r, layout.num_params(), "parameters")?;
    Ok(GmmEntropyModel::from_params(
        layout,
        params.into_iter().map(f64::from).collect(),
    )?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorMeta {
    transforms: [ModalityTransform; 2],
    prior: ClassPrior,
    entropy_report: TrainReport,
    classifier_report: TrainReport,
}

fn head_file(head: Head) -> &'static str {
    match head {
        Head::Visual => "visual",
        Head::Text => "text",
        Head::Joint => "joint",
    }
}

fn save_bytes(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn load_bytes<T>(path: &Path, f: impl FnOnce(&mut &[u8]) -> Result<T>) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    f(&mut bytes.as_slice())
}

/// Writes `{visual,text,joint}.minn`, `{visual,text,joint}.migm`,
/// `prior.json` and `estimator.json` into `dir`.
pub fn save_estimator(est: &FittedEstimator, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let nets = est.discriminators()?;
    for head in Head::ALL {
        let name = head_file(head);
        save_bytes(&dir.join(format!("{name}.minn")), |b| write_net(nets.net(head), b))?;
        save_bytes(&dir.join(format!("{name}.migm")), |b| {
            write_gmm(&est.entropy[head.index()], b)
        })?;
    }
    write_json(dir.join("prior.json"), &est.prior)?;
    write_json(
        dir.join("estimator.json"),
        &EstimatorMeta {
            transforms: est.transforms.clone(),
            prior: est.prior.clone(),
            entropy_report: est.entropy_report.clone(),
            classifier_report: est.classifier_report.clone(),
        },
    )
}

pub fn load_estimator(dir: impl AsRef<Path>) -> Result<FittedEstimator> {
    let dir = dir.as_ref();
    let meta: EstimatorMeta = read_json(dir.join("estimator.json"))?;
    let prior: ClassPrior = read_json(dir.join("prior.json"))?;
    let mut nets = Vec::new();
    let mut entropy = Vec::new();
    for head in Head::ALL {
        let name = head_file(head);
        nets.push(load_bytes(&dir.join(format!("{name}.minn")), |r| read_net(r))?);
        entropy.push(load_bytes(&dir.join(format!("{name}.migm")), |r| read_gmm(r))?);
    }
    let nets: [DenseNet<f32>; 3] = nets.try_into().map_err(|_| Error::Corruption("network count".into()))?;
    let entropy: [GmmEntropyModel; 3] = entropy
        .try_into()
        .map_err(|_| Error::Corruption("entropy model count".into()))?;
    Ok(FittedEstimator {
        transforms: meta.transforms,
        entropy,
        discriminators: Some(DiscriminatorSet::from_nets(nets)?),
        prior,
        entropy_report: meta.entropy_report,
        classifier_report: meta.classifier_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_net() -> DenseNet<f32> {
        let layout = DenseLayout::mlp(3, &[4], 2).unwrap();
        let params = (0..layout.num_params()).map(|i| (i as f32 * 0.37).sin()).collect();
        DenseNet::from_params(layout, params).unwrap()
    }

    #[test]
    fn net_round_trip_is_exact() {
        let net = seeded_net();
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MINN");
        assert_eq!(read_net(&mut buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn gmm_round_trip_within_single_precision() {
        let model = GmmEntropyModel::from_parts(
            &[0.1, -0.2],
            &[vec![0.0, 1.0], vec![2.0, -1.0]],
            &[vec![1.0, 0.3, 0.7], vec![0.5, -0.1, 1.2]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_gmm(&model, &mut buf).unwrap();
        assert_eq!(buf.len(), 14 + 4 * model.params().len());
        let back = read_gmm(&mut buf.as_slice()).unwrap();
        for (a, b) in model.params().iter().zip(back.params()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_net_is_reported() {
        let mut buf = Vec::new();
        write_net(&seeded_net(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_net(&mut buf.as_slice()), Err(Error::Truncation { .. })));
    }

    #[test]
    fn wrong_magic_is_reported() {
        let mut buf = Vec::new();
        write_net(&seeded_net(), &mut buf).unwrap();
        assert!(matches!(read_gmm(&mut buf.as_slice()), Err(Error::Format { .. })));
    }
}
