use serde::{Deserialize, Serialize};

use super::layers::{Activation, BatchNorm, Dense, Dropout, Layer, Reshape};
use super::recurrent::{Frame, Recurrent};
use super::NnError;
use crate::fleet::WINDOW_TICKS;
use crate::rng::Rng;

pub const INIT_STD: f64 = 0.05;
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Frames the 240x2 window is cut into for the convolutional model.
pub const CONV_FRAMES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Lstm { units: usize, return_sequences: bool },
    ConvLstm { filters: usize, kernel: [usize; 2], return_sequences: bool },
    Dense { units: usize, activation: Activation },
    BatchNorm { momentum: f64, epsilon: f64 },
    Dropout { rate: f64 },
    Flatten,
    Reshape { shape: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Shape of one sample.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub init_std: f64,
}

impl NetworkSpec {
    /// Output shape after every layer; checks the chain and the sigmoid head.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let bad = |i: usize, m: String| Err(NnError::Spec(format!("layer {i}: {m}")));
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Spec(format!("input shape {:?}", self.input_shape)));
        }
        if !(self.init_std > 0.0) {
            return Err(NnError::Spec("init std must be positive".into()));
        }
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            cur = match l {
                LayerSpec::Lstm { units, return_sequences } => {
                    if cur.len() != 2 || *units == 0 {
                        return bad(i, format!("lstm needs [steps, features] input and units > 0, got {cur:?}"));
                    }
                    if *return_sequences { vec![cur[0], *units] } else { vec![*units] }
                }
                LayerSpec::ConvLstm { filters, kernel, return_sequences } => {
                    if cur.len() != 4 || *filters == 0 || kernel.contains(&0) {
                        return bad(i, format!("conv_lstm needs [steps, h, w, ch] input, got {cur:?}"));
                    }
                    if *return_sequences {
                        vec![cur[0], cur[1], cur[2], *filters]
                    } else {
                        vec![cur[1], cur[2], *filters]
                    }
                }
                LayerSpec::Dense { units, .. } => {
                    if *units == 0 {
                        return bad(i, "dense units must be > 0".into());
                    }
                    let mut s = cur.clone();
                    *s.last_mut().expect("non-empty") = *units;
                    s
                }
                LayerSpec::BatchNorm { momentum, epsilon } => {
                    if !(0.0..1.0).contains(momentum) || !(*epsilon > 0.0) {
                        return bad(i, "batch norm momentum in [0, 1) and epsilon > 0".into());
                    }
                    cur.clone()
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return bad(i, format!("dropout rate {rate} not in [0, 1)"));
                    }
                    cur.clone()
                }
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Reshape { shape } => {
                    if shape.iter().product::<usize>() != cur.iter().product::<usize>() || shape.contains(&0) {
                        return bad(i, format!("cannot reshape {cur:?} to {shape:?}"));
                    }
                    shape.clone()
                }
            };
            out.push(cur.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units: 1, activation: Activation::Sigmoid }) if cur == [1] => Ok(out),
            _ => Err(NnError::Spec("network must end in a one-unit sigmoid dense layer on a flat input".into())),
        }
    }

    pub fn build(&self, rng: &mut Rng) -> Result<Vec<Box<dyn Layer>>, NnError> {
        let shapes = self.shapes()?;
        let mut layers: Vec<Box<dyn Layer>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let input = if i == 0 { &self.input_shape } else { &shapes[i - 1] };
            let last = *input.last().expect("validated");
            let std = self.init_std;
            layers.push(match l {
                LayerSpec::Lstm { units, return_sequences } => {
                    Box::new(Recurrent::lstm(last, *units, *return_sequences, std, rng))
                }
                LayerSpec::ConvLstm { filters, kernel, return_sequences } => {
                    let frame = Frame { height: input[1], width: input[2], kernel_h: kernel[0], kernel_w: kernel[1] };
                    Box::new(Recurrent::conv_lstm(frame, last, *filters, *return_sequences, std, rng))
                }
                LayerSpec::Dense { units, activation } => Box::new(Dense::new(last, *units, *activation, std, rng)),
                LayerSpec::BatchNorm { momentum, epsilon } => Box::new(BatchNorm::new(last, *momentum, *epsilon)),
                LayerSpec::Dropout { rate } => Box::new(Dropout::new(*rate)),
                LayerSpec::Flatten => Box::new(Reshape::flatten(shapes[i][0])),
                LayerSpec::Reshape { shape } => Box::new(Reshape::new(shape.clone())),
            });
        }
        Ok(layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchFamily {
    Lstm,
    ConvLstm,
}

impl ArchFamily {
    pub fn name(self) -> &'static str {
        match self {
            ArchFamily::Lstm => "lstm",
            ArchFamily::ConvLstm => "conv_lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lstm" => Some(ArchFamily::Lstm),
            "conv_lstm" | "convlstm" => Some(ArchFamily::ConvLstm),
            _ => None,
        }
    }
}

/// Everything the search tunes. The LSTM uses units 1-3; the ConvLSTM
/// uses units 1-2, filters and kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub units1: usize,
    pub units2: usize,
    pub units3: usize,
    pub filters1: usize,
    pub kernel1: usize,
    pub filters2: usize,
    pub kernel2: usize,
}

impl Hyperparams {
    /// Published optimum of the LSTM on 5 s attack tails.
    pub fn table_lstm_attack5() -> Self {
        Hyperparams {
            learning_rate: 0.014717,
            dropout: 0.34,
            batch_size: 56,
            epochs: 5,
            units1: 146,
            units2: 180,
            units3: 32,
            filters1: 0,
            kernel1: 0,
            filters2: 0,
            kernel2: 0,
        }
    }

    pub fn table_lstm_attack10() -> Self {
        Hyperparams {
            learning_rate: 0.0007081,
            dropout: 0.2,
            batch_size: 40,
            epochs: 6,
            units1: 119,
            units2: 104,
            units3: 32,
            ..Self::table_lstm_attack5()
        }
    }

    pub fn table_conv_attack5() -> Self {
        Hyperparams {
            learning_rate: 0.0001939,
            dropout: 0.2,
            batch_size: 30,
            epochs: 6,
            units1: 150,
            units2: 32,
            units3: 0,
            filters1: 4,
            kernel1: 6,
            filters2: 8,
            kernel2: 5,
        }
    }

    pub fn table_conv_attack10() -> Self {
        Hyperparams {
            learning_rate: 0.0001,
            dropout: 0.18,
            batch_size: 34,
            epochs: 7,
            units1: 176,
            units2: 16,
            units3: 0,
            filters1: 5,
            kernel1: 5,
            filters2: 8,
            kernel2: 5,
        }
    }

    /// Small defaults that train in seconds on one core.
    pub fn desk(family: ArchFamily) -> Self {
        match family {
            ArchFamily::Lstm => Hyperparams {
                learning_rate: 0.005,
                dropout: 0.2,
                batch_size: 32,
                epochs: 8,
                units1: 16,
                units2: 16,
                units3: 8,
                filters1: 0,
                kernel1: 0,
                filters2: 0,
                kernel2: 0,
            },
            ArchFamily::ConvLstm => Hyperparams {
                learning_rate: 0.005,
                dropout: 0.2,
                batch_size: 32,
                epochs: 16,
                units1: 8,
                units2: 16,
                units3: 0,
                filters1: 6,
                kernel1: 3,
                filters2: 6,
                kernel2: 3,
            },
        }
    }

    pub fn spec(&self, family: ArchFamily) -> NetworkSpec {
        let bn = LayerSpec::BatchNorm { momentum: BN_MOMENTUM, epsilon: BN_EPSILON };
        let drop = LayerSpec::Dropout { rate: self.dropout };
        let leaky = Activation::LeakyRelu;
        let layers = match family {
            ArchFamily::Lstm => vec![
                LayerSpec::Lstm { units: self.units1, return_sequences: true },
                LayerSpec::Dense { units: self.units2, activation: leaky },
                bn.clone(),
                drop.clone(),
                LayerSpec::Dense { units: self.units3, activation: leaky },
                bn,
                drop,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 1, activation: Activation::Sigmoid },
            ],
            ArchFamily::ConvLstm => vec![
                // Frames of 20 ticks with the two features as channels, so kernels
                // slide along time only.
                LayerSpec::Reshape { shape: vec![CONV_FRAMES, WINDOW_TICKS / CONV_FRAMES, 1, 2] },
                LayerSpec::ConvLstm {
                    filters: self.filters1,
                    kernel: [self.kernel1, 1],
                    return_sequences: true,
                },
                bn.clone(),
                drop.clone(),
                LayerSpec::Dense { units: self.units1, activation: leaky },
                bn.clone(),
                drop.clone(),
                LayerSpec::ConvLstm {
                    filters: self.filters2,
                    kernel: [self.kernel2, 1],
                    return_sequences: false,
                },
                bn,
                drop,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: self.units2, activation: leaky },
                LayerSpec::Dense { units: 1, activation: Activation::Sigmoid },
            ],
        };
        NetworkSpec { input_shape: vec![WINDOW_TICKS, 2], layers, init_std: INIT_STD }
    }

    pub fn validate(&self, family: ArchFamily) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config("batch size and epochs must be >= 1".into()));
        }
        self.spec(family).shapes().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_configs_chain() {
        let lstm = Hyperparams::table_lstm_attack5().spec(ArchFamily::Lstm).shapes().unwrap();
        assert_eq!(lstm[0], vec![240, 146]);
        assert_eq!(lstm[4], vec![240, 32]);
        assert_eq!(lstm.last().unwrap(), &vec![1]);
        let conv = Hyperparams::table_conv_attack5().spec(ArchFamily::ConvLstm).shapes().unwrap();
        assert_eq!(conv[0], vec![12, 20, 1, 2]);
        assert_eq!(conv[1], vec![12, 20, 1, 4]);
        assert_eq!(conv[7], vec![20, 1, 8]);
        assert_eq!(conv[10], vec![160]);
        Hyperparams::table_conv_attack10().validate(ArchFamily::ConvLstm).unwrap();
        Hyperparams::table_lstm_attack10().validate(ArchFamily::Lstm).unwrap();
    }

    #[test]
    fn rejects_headless_network() {
        let spec = NetworkSpec {
            input_shape: vec![4, 2],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2, activation: Activation::Sigmoid }],
            init_std: 0.05,
        };
        assert!(matches!(spec.shapes(), Err(NnError::Spec(_))));
    }

    #[test]
    fn spec_json_roundtrip() {
        let s = Hyperparams::desk(ArchFamily::ConvLstm).spec(ArchFamily::ConvLstm);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<NetworkSpec>(&j).unwrap(), s);
    }
}
