use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CodecError;
use crate::descriptor::ModelDescriptor;
use crate::nn::{Graph, GraphError, Layer, LayerKind, LayerSpec};
use crate::rvq::{Codebook, Projection, ResidualQuantizer, CODEBOOK_SIZE};
use crate::weights::{Tensor, WeightStore};

/// Encoder, quantizer and decoder bound to their weights. Immutable once
/// built; any number of sessions may share one model.
#[derive(Debug, Clone)]
pub struct Model {
    descriptor: ModelDescriptor,
    weights: WeightStore,
    pub(super) encoder: Graph,
    pub(super) decoder: Graph,
    pub(super) in_proj: Projection,
    pub(super) out_proj: Projection,
    pub(super) quantizer: ResidualQuantizer,
}

/// Parses a descriptor and a weight container and binds them.
pub fn load_model(descriptor: &[u8], weights: &[u8]) -> Result<Model, CodecError> {
    let descriptor = ModelDescriptor::from_bytes(descriptor)?;
    let weights = WeightStore::from_bytes(weights)?;
    Model::new(descriptor, weights)
}

fn build_graph(
    section: &'static str,
    specs: &[LayerSpec],
    weights: &WeightStore,
) -> Result<Graph, CodecError> {
    let mut layers = Vec::with_capacity(specs.len());
    for (index, spec) in specs.iter().enumerate() {
        let tensors: Vec<Tensor> = spec
            .tensor_specs()
            .iter()
            .map(|ts| weights.get(&format!("{section}.{index}.{}", ts.suffix)).unwrap().clone())
            .collect();
        let layer = Layer::new(spec.clone(), &tensors).map_err(|source| CodecError::Graph {
            section,
            source: GraphError::Layer { index, source },
        })?;
        layers.push(layer);
    }
    Graph::new(layers).map_err(|source| CodecError::Graph { section, source })
}

impl Model {
    pub fn new(descriptor: ModelDescriptor, weights: WeightStore) -> Result<Self, CodecError> {
        descriptor.validate()?;
        let inventory = descriptor.tensor_inventory();
        for (name, shape) in &inventory {
            let t = weights
                .get(name)
                .ok_or_else(|| CodecError::MissingTensor(name.clone()))?;
            if &t.shape != shape {
                return Err(CodecError::Shape {
                    tensor: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape.clone(),
                });
            }
        }
        let known: HashSet<&str> = inventory.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(extra) = weights.names().find(|n| !known.contains(n)) {
            return Err(CodecError::UnexpectedTensor(extra.to_string()));
        }

        let encoder = build_graph("encoder", &descriptor.encoder, &weights)?;
        let decoder = build_graph("decoder", &descriptor.decoder, &weights)?;
        let (d, m) = (descriptor.rvq.dim, descriptor.rvq.model_dim);
        let tensor = |n: &str| weights.get(n).unwrap().data.clone();
        let (in_proj, out_proj) = if descriptor.rvq.projection {
            (
                Projection::affine(m, d, tensor("rvq.in_proj.weight"), tensor("rvq.in_proj.bias"))?,
                Projection::affine(d, m, tensor("rvq.out_proj.weight"), tensor("rvq.out_proj.bias"))?,
            )
        } else {
            (Projection::Identity, Projection::Identity)
        };
        for name in ["rvq.in_proj.weight", "rvq.in_proj.bias", "rvq.out_proj.weight", "rvq.out_proj.bias"] {
            if weights.get(name).is_some_and(|t| t.data.iter().any(|v| !v.is_finite())) {
                return Err(CodecError::NonFiniteTensor(name.to_string()));
            }
        }
        let codebooks = (0..descriptor.rvq.num_layers)
            .map(|l| Codebook::new(d, tensor(&format!("rvq.codebook.{l}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let quantizer = ResidualQuantizer::new(codebooks)?;
        Ok(Self {
            descriptor,
            weights,
            encoder,
            decoder,
            in_proj,
            out_proj,
            quantizer,
        })
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn quantizer(&self) -> &ResidualQuantizer {
        &self.quantizer
    }

    pub fn encoder(&self) -> &Graph {
        &self.encoder
    }

    pub fn decoder(&self) -> &Graph {
        &self.decoder
    }

    pub fn sample_rate(&self) -> u32 {
        self.descriptor.sample_rate
    }

    pub fn frame_hop(&self) -> usize {
        self.descriptor.frame_hop
    }

    pub fn num_layers(&self) -> usize {
        self.quantizer.num_layers()
    }

    /// Same model with its codebooks replaced.
    pub fn with_quantizer(&self, quantizer: ResidualQuantizer) -> Result<Self, CodecError> {
        let mut weights = self.weights.clone();
        for (l, cb) in quantizer.codebooks().iter().enumerate() {
            let t = Tensor::new(vec![CODEBOOK_SIZE, cb.dim()], cb.as_slice().to_vec())?;
            weights.insert(format!("rvq.codebook.{l}"), t);
        }
        Self::new(self.descriptor.clone(), weights)
    }
}

/// How [`init_weights`] fills layer tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in ±1/√fan_in, zero biases.
    Random,
    /// Identity framing: a single conv1d encoder and tconv1d decoder with
    /// kernel = stride = frame_hop copy each hop into one embedding and back.
    Framing,
}

/// Generates deterministic weights for `descriptor`. Codebooks are always
/// drawn uniformly from ±1/√dim.
pub fn init_weights(
    descriptor: &ModelDescriptor,
    scheme: InitScheme,
    seed: u64,
) -> Result<WeightStore, CodecError> {
    descriptor.validate()?;
    if scheme == InitScheme::Framing {
        check_framing(descriptor)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, shape) in descriptor.tensor_inventory() {
        let n: usize = shape.iter().product();
        let data = if name.starts_with("rvq.codebook.") {
            let bound = 1.0 / (descriptor.rvq.dim as f32).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        } else if scheme == InitScheme::Framing {
            let mut data = vec![0.0; n];
            if name.ends_with(".weight") {
                // [hop, 1, hop] and [hop, 1, hop]: unit taps on the diagonal.
                let hop = descriptor.frame_hop;
                for c in 0..hop {
                    data[c * hop + c] = 1.0;
                }
            }
            data
        } else if name.ends_with("bias") {
            vec![0.0; n]
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        store.insert(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

fn check_framing(d: &ModelDescriptor) -> Result<(), CodecError> {
    let hop = d.frame_hop;
    let framing = |l: &LayerSpec, kind| l.kind == kind && l.kernel == hop && l.stride == hop && l.groups == 1;
    let ok = d.encoder.len() == 1
        && d.decoder.len() == 1
        && framing(&d.encoder[0], LayerKind::Conv1d)
        && framing(&d.decoder[0], LayerKind::Tconv1d)
        && d.rvq.model_dim == hop
        && !d.rvq.projection;
    if ok {
        Ok(())
    } else {
        Err(CodecError::InitScheme(
            "framing init needs one conv1d and one tconv1d with kernel = stride = frame_hop = model_dim and no projection".into(),
        ))
    }
}
