use thiserror::Error;

use super::layer::{run_layer_offline, run_layer_streaming, Layer, LayerSpec, LayerState};
use super::{Frames, LayerError};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: LayerError,
    },
    #[error("layer {index}: expects {expected} input channels but receives {actual}")]
    Incompatible {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("graph state has {actual} layer states, graph has {expected} layers")]
    StateMismatch { expected: usize, actual: usize },
}

/// A chain of layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    layers: Vec<Layer>,
}

/// Checks that each layer's input width matches its predecessor's output.
pub(crate) fn check_chain(specs: &[LayerSpec]) -> Result<(), GraphError> {
    for (index, spec) in specs.iter().enumerate() {
        spec.validate()
            .map_err(|source| GraphError::Layer { index, source })?;
        if index > 0 && specs[index - 1].out_channels != spec.in_channels {
            return Err(GraphError::Incompatible {
                index,
                expected: spec.in_channels,
                actual: specs[index - 1].out_channels,
            });
        }
    }
    Ok(())
}

impl Graph {
    pub fn new(layers: Vec<Layer>) -> Result<Self, GraphError> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec().clone()).collect();
        check_chain(&specs)?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_channels(&self) -> Option<usize> {
        self.layers.first().map(|l| l.spec().in_channels)
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.layers.last().map(|l| l.spec().out_channels)
    }

    /// Output length of an offline run over `len` input steps.
    pub fn output_len(&self, len: usize) -> usize {
        self.layers.iter().fold(len, |n, l| l.spec().output_len(n))
    }

    pub fn run(&self, input: &Frames) -> Result<Frames, GraphError> {
        let mut x = input.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            x = run_layer_offline(layer, &x).map_err(|source| GraphError::Layer { index, source })?;
        }
        Ok(x)
    }

    pub fn new_state(&self) -> GraphState {
        GraphState {
            layers: self.layers.iter().map(Layer::new_state).collect(),
        }
    }

    pub fn run_streaming(&self, state: &mut GraphState, chunk: &Frames) -> Result<Frames, GraphError> {
        if state.layers.len() != self.layers.len() {
            return Err(GraphError::StateMismatch {
                expected: self.layers.len(),
                actual: state.layers.len(),
            });
        }
        let mut x = chunk.clone();
        for (index, (layer, s)) in self.layers.iter().zip(&mut state.layers).enumerate() {
            x = run_layer_streaming(layer, s, &x).map_err(|source| GraphError::Layer { index, source })?;
        }
        Ok(x)
    }

    /// Returns every layer state to its freshly created value.
    pub fn reset_states(&self, state: &mut GraphState) {
        *state = self.new_state();
    }
}

/// One streaming state per graph layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    layers: Vec<LayerState>,
}

impl GraphState {
    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerKind};
    use crate::weights::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build(specs: &[LayerSpec], seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|s| {
                let tensors: Vec<Tensor> = s
                    .tensor_specs()
                    .into_iter()
                    .map(|ts| {
                        let n = ts.shape.iter().product();
                        let data = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
                        Tensor::new(ts.shape, data).unwrap()
                    })
                    .collect();
                Layer::new(s.clone(), &tensors).unwrap()
            })
            .collect();
        Graph::new(layers).unwrap()
    }

    fn identity() -> Layer {
        Layer::new(
            LayerSpec::conv1d(1, 1, 1, 1),
            &[
                Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(),
                Tensor::new(vec![1], vec![0.0]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn empty_graph_is_identity() {
        let g = Graph::new(Vec::new()).unwrap();
        let x = Frames::from_signal(&[1.0, 2.0]);
        assert_eq!(g.run(&x).unwrap(), x);
    }

    #[test]
    fn two_identities_compose() {
        let one = Graph::new(vec![identity()]).unwrap();
        let two = Graph::new(vec![identity(), identity()]).unwrap();
        let x = Frames::from_signal(&[0.1, -0.7, 3.0]);
        assert_eq!(one.run(&x).unwrap(), two.run(&x).unwrap());
    }

    #[test]
    fn encoder_strides_give_100_frames_per_second() {
        let specs = [
            LayerSpec::conv1d(1, 4, 4, 2),
            LayerSpec::conv1d(4, 4, 8, 4),
            LayerSpec::conv1d(4, 4, 10, 5),
            LayerSpec::conv1d(4, 4, 12, 6),
        ];
        let g = build(&specs, 1);
        let y = g.run(&Frames::zeros(1, 24_000)).unwrap();
        assert_eq!(y.len(), 100);
        assert_eq!(g.output_len(24_000), 100);
    }

    #[test]
    fn incompatible_layer_is_reported_by_index() {
        let specs = [
            LayerSpec::conv1d(1, 4, 3, 1),
            LayerSpec::activation(4, Activation::Relu),
            LayerSpec::conv1d(5, 4, 3, 1),
        ];
        assert_eq!(
            check_chain(&specs),
            Err(GraphError::Incompatible {
                index: 2,
                expected: 5,
                actual: 4
            })
        );
    }

    fn mixed_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv1d(1, 4, 5, 1),
            LayerSpec::residual(4, 3).with_lookahead(1),
            LayerSpec::conv1d(4, 6, 4, 2),
            LayerSpec::activation(6, Activation::Tanh),
            LayerSpec::tconv1d(6, 3, 3, 2),
            LayerSpec::linear(3, 2),
        ]
    }

    #[test]
    fn reset_matches_fresh_session() {
        let g = build(&mixed_specs(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f32> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Frames::from_signal(&x);

        let mut fresh = g.new_state();
        let expect = g.run_streaming(&mut fresh, &x).unwrap();

        let mut used = g.new_state();
        g.run_streaming(&mut used, &x.slice(0, 37)).unwrap();
        g.reset_states(&mut used);
        assert_eq!(used, g.new_state());
        g.reset_states(&mut used);
        assert_eq!(used, g.new_state());
        assert_eq!(g.run_streaming(&mut used, &x).unwrap(), expect);
    }

    #[test]
    fn graph_streaming_matches_offline() {
        let g = build(&mixed_specs(), 4);
        assert!(g.layers().iter().any(|l| l.spec().kind == LayerKind::Tconv1d));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f32> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Frames::from_signal(&x);
        let offline = g.run(&x).unwrap();
        assert_eq!(offline.len(), g.output_len(1000));
        for chunk in [1usize, 7, 240, 1000] {
            let mut state = g.new_state();
            let mut out = Frames::empty(2);
            for start in (0..1000).step_by(chunk) {
                let end = (start + chunk).min(1000);
                out.append(&g.run_streaming(&mut state, &x.slice(start, end)).unwrap());
            }
            assert_eq!(out, offline, "chunk {chunk}");
            assert_eq!(state.layers()[0].position(), 1000);
        }
    }
}
