//! Analytical complexity and latency accounting.
//!
//! All rates are exact rationals per second. FLOP/s is always
//! `2 × MAC/s + additions/s`, where the additions are bias terms, residual
//! skip connections and codeword summation, each listed separately.
//! Activations are free.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde_json::{json, Value};
use thiserror::Error;

use crate::descriptor::{DescriptorError, ModelDescriptor};
use crate::nn::{LayerKind, LayerSpec};
use crate::rvq::{RvqConfig, BITS_PER_INDEX, CODEBOOK_SIZE};

pub type Rate = Ratio<i128>;

fn int(v: usize) -> Rate {
    Rate::from_integer(v as i128)
}

fn zero() -> Rate {
    Rate::from_integer(0)
}

/// Lossy view of an exact rate.
pub fn to_f64(r: &Rate) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn exact(r: &Rate) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn mega(r: &Rate) -> f64 {
    to_f64(r) / 1e6
}

#[derive(Debug, Error, PartialEq)]
pub enum ComplianceError {
    #[error("input rate must be positive")]
    Rate,
    #[error("invalid layer: {0}")]
    Layer(String),
    #[error("unknown track {0}, expected 1 or 2")]
    Track(u8),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

/// Compute, latency and bitrate limits for one track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Budget {
    pub track: u8,
    pub receive_mflops: i128,
    pub total_mflops: i128,
    pub latency_ms: i128,
    pub ulb_bitrate: i128,
    pub lb_bitrate: i128,
}

impl Budget {
    pub fn track(track: u8) -> Result<Self, ComplianceError> {
        let (receive_mflops, total_mflops, latency_ms) = match track {
            1 => (300, 700, 30),
            2 => (600, 2600, 50),
            t => return Err(ComplianceError::Track(t)),
        };
        Ok(Self {
            track,
            receive_mflops,
            total_mflops,
            latency_ms,
            ulb_bitrate: 1000,
            lb_bitrate: 6000,
        })
    }
}

/// Cost of one operation at its operating rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Cost {
    pub f_in: Rate,
    pub f_out: Rate,
    pub mac: Rate,
    pub bias_adds: Rate,
    pub other_adds: Rate,
}

impl Cost {
    pub fn adds(&self) -> Rate {
        self.bias_adds + self.other_adds
    }

    pub fn flop(&self) -> Rate {
        self.mac * 2 + self.adds()
    }
}

/// Per-second cost of `spec` fed at `f_in` steps per second.
///
/// Transposed convolutions are charged at the input rate: each input step
/// multiplies the whole kernel.
pub fn layer_cost(spec: &LayerSpec, f_in: Rate) -> Result<Cost, ComplianceError> {
    if f_in <= zero() {
        return Err(ComplianceError::Rate);
    }
    spec.validate().map_err(|e| ComplianceError::Layer(e.to_string()))?;
    let (i, o, k, s, g) = (
        int(spec.in_channels),
        int(spec.out_channels),
        int(spec.kernel),
        int(spec.stride),
        int(spec.groups),
    );
    let cost = match spec.kind {
        LayerKind::Conv1d => {
            let f_out = f_in / s;
            Cost {
                f_in,
                f_out,
                mac: o * i * k * f_out / g,
                bias_adds: o * f_out,
                other_adds: zero(),
            }
        }
        LayerKind::Tconv1d => {
            let f_out = f_in * s;
            Cost {
                f_in,
                f_out,
                mac: o * i * k * f_in / g,
                bias_adds: o * f_out,
                other_adds: zero(),
            }
        }
        LayerKind::Linear => Cost {
            f_in,
            f_out: f_in,
            mac: i * o * f_in,
            bias_adds: o * f_in,
            other_adds: zero(),
        },
        LayerKind::ResidualBlock => Cost {
            f_in,
            f_out: f_in,
            mac: i * i * k * f_in / g + i * i * f_in,
            bias_adds: i * f_in * 2,
            other_adds: i * f_in,
        },
        LayerKind::Activation => Cost {
            f_in,
            f_out: f_in,
            mac: zero(),
            bias_adds: zero(),
            other_adds: zero(),
        },
    };
    Ok(cost)
}

/// Quantizer costs at `frame_rate` frames per second.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqCost {
    pub in_proj: Cost,
    /// `layers × 1024 × d` multiply-accumulates per frame for `r·c`; codeword
    /// norms are precomputed and `‖r‖²` is common to all candidates.
    pub search: Cost,
    /// Summing one codeword per layer.
    pub dequantize: Cost,
    pub out_proj: Cost,
}

impl RvqCost {
    pub fn encode_side(&self) -> Rate {
        self.in_proj.flop() + self.search.flop()
    }

    pub fn decode_side(&self) -> Rate {
        self.dequantize.flop() + self.out_proj.flop()
    }
}

pub fn rvq_cost(config: &RvqConfig, frame_rate: Rate) -> RvqCost {
    let (l, d, m) = (int(config.num_layers), int(config.dim), int(config.model_dim));
    let fr = frame_rate;
    let none = Cost {
        f_in: fr,
        f_out: fr,
        mac: zero(),
        bias_adds: zero(),
        other_adds: zero(),
    };
    let proj = |i: Rate, o: Rate| match config.projection {
        true => Cost {
            mac: i * o * fr,
            bias_adds: o * fr,
            ..none.clone()
        },
        false => none.clone(),
    };
    RvqCost {
        in_proj: proj(m, d),
        search: Cost {
            mac: l * int(CODEBOOK_SIZE) * d * fr,
            ..none.clone()
        },
        dequantize: Cost {
            other_adds: l * d * fr,
            ..none.clone()
        },
        out_proj: proj(d, m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Runs on the sender only.
    Transmit,
    /// Runs on the receiver.
    Receive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    /// e.g. `encoder.3`, `rvq.search`.
    pub id: String,
    pub description: String,
    pub side: Side,
    pub cost: Cost,
}

/// Lookahead and framing delay in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Latency {
    pub algorithmic_ms: Rate,
    pub buffering_ms: Rate,
    pub total_ms: Rate,
}

/// Latency from architecture alone. A layer whose input runs at a
/// cumulative stride of `S` samples contributes `lookahead × S / sample_rate`.
pub fn latency(d: &ModelDescriptor) -> Latency {
    let sr = int(d.sample_rate as usize);
    let mut algorithmic = zero();
    // Input step duration in samples.
    let mut step = int(1);
    let mut walk = |layers: &[LayerSpec], step: &mut Rate| {
        for l in layers {
            algorithmic += int(l.lookahead) * *step;
            match l.kind {
                LayerKind::Conv1d => *step *= int(l.stride),
                LayerKind::Tconv1d => *step /= int(l.stride),
                _ => {}
            }
        }
    };
    walk(&d.encoder, &mut step);
    let mut step = int(d.frame_hop);
    walk(&d.decoder, &mut step);
    let to_ms = |samples: Rate| samples * 1000 / sr;
    let algorithmic_ms = to_ms(algorithmic);
    let buffering_ms = to_ms(int(d.frame_hop));
    Latency {
        total_ms: algorithmic_ms + buffering_ms,
        algorithmic_ms,
        buffering_ms,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub constraint: &'static str,
    pub unit: &'static str,
    pub value: Rate,
    pub limit: Rate,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.value <= self.limit
    }

    /// Headroom below the limit; negative means overshoot.
    pub fn margin(&self) -> Rate {
        self.limit - self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceReport {
    pub model: String,
    pub budget: Budget,
    pub rows: Vec<CostRow>,
    pub encoder_flops: Rate,
    pub rvq_encode_flops: Rate,
    pub rvq_decode_flops: Rate,
    pub decoder_flops: Rate,
    pub receive_side_flops: Rate,
    pub total_flops: Rate,
    pub total_mac: Rate,
    pub total_adds: Rate,
    pub latency: Latency,
    pub verdicts: Vec<Verdict>,
}

impl ComplianceReport {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(Verdict::pass)
    }
}

fn describe(spec: &LayerSpec) -> String {
    let mut s = format!("{} {}→{}", spec.kind.name(), spec.in_channels, spec.out_channels);
    if spec.kind != LayerKind::Activation && spec.kind != LayerKind::Linear {
        write!(s, " k{}", spec.kernel).unwrap();
    }
    if spec.stride != 1 {
        write!(s, " s{}", spec.stride).unwrap();
    }
    if spec.groups != 1 {
        write!(s, " g{}", spec.groups).unwrap();
    }
    if spec.lookahead != 0 {
        write!(s, " la{}", spec.lookahead).unwrap();
    }
    if let Some(a) = spec.activation {
        write!(s, " {a:?}").unwrap();
    }
    s
}

pub fn analyze(d: &ModelDescriptor, budget: &Budget) -> Result<ComplianceReport, ComplianceError> {
    d.validate()?;
    let mut rows = Vec::new();
    let mut f = int(d.sample_rate as usize);
    for (i, spec) in d.encoder.iter().enumerate() {
        let cost = layer_cost(spec, f)?;
        f = cost.f_out;
        rows.push(CostRow {
            id: format!("encoder.{i}"),
            description: describe(spec),
            side: Side::Transmit,
            cost,
        });
    }
    let frame_rate = Rate::new(d.sample_rate as i128, d.frame_hop as i128);
    let rvq = rvq_cost(&d.rvq, frame_rate);
    let r = &d.rvq;
    let rvq_rows = [
        ("rvq.in_proj", format!("projection {}→{}", r.model_dim, r.dim), Side::Transmit, rvq.in_proj.clone()),
        (
            "rvq.search",
            format!("{} × {CODEBOOK_SIZE} codewords, d={}", r.num_layers, r.dim),
            Side::Transmit,
            rvq.search.clone(),
        ),
        ("rvq.dequantize", format!("sum of {} codewords", r.num_layers), Side::Receive, rvq.dequantize.clone()),
        ("rvq.out_proj", format!("projection {}→{}", r.dim, r.model_dim), Side::Receive, rvq.out_proj.clone()),
    ];
    for (id, description, side, cost) in rvq_rows {
        rows.push(CostRow {
            id: id.to_string(),
            description,
            side,
            cost,
        });
    }
    let mut f = frame_rate;
    for (i, spec) in d.decoder.iter().enumerate() {
        let cost = layer_cost(spec, f)?;
        f = cost.f_out;
        rows.push(CostRow {
            id: format!("decoder.{i}"),
            description: describe(spec),
            side: Side::Receive,
            cost,
        });
    }

    let sum = |pred: &dyn Fn(&CostRow) -> bool| rows.iter().filter(|r| pred(r)).map(|r| r.cost.flop()).fold(zero(), |a, b| a + b);
    let encoder_flops = sum(&|r| r.id.starts_with("encoder."));
    let decoder_flops = sum(&|r| r.id.starts_with("decoder."));
    let rvq_encode_flops = sum(&|r| r.id.starts_with("rvq.") && r.side == Side::Transmit);
    let rvq_decode_flops = sum(&|r| r.id.starts_with("rvq.") && r.side == Side::Receive);
    let receive_side_flops = sum(&|r| r.side == Side::Receive);
    let total_flops = sum(&|_| true);
    let total_mac = rows.iter().map(|r| r.cost.mac).fold(zero(), |a, b| a + b);
    let total_adds = rows.iter().map(|r| r.cost.adds()).fold(zero(), |a, b| a + b);
    let latency = latency(d);

    let bits = |layers: usize| int(layers) * int(BITS_PER_INDEX as usize) * frame_rate;
    let mega = |v: i128| Rate::from_integer(v * 1_000_000);
    let verdicts = vec![
        Verdict {
            constraint: "receive-side complexity",
            unit: "MFLOP/s",
            value: receive_side_flops,
            limit: mega(budget.receive_mflops),
        },
        Verdict {
            constraint: "total complexity",
            unit: "MFLOP/s",
            value: total_flops,
            limit: mega(budget.total_mflops),
        },
        Verdict {
            constraint: "latency",
            unit: "ms",
            value: latency.total_ms,
            limit: Rate::from_integer(budget.latency_ms),
        },
        Verdict {
            constraint: "ULB bitrate (mode 1)",
            unit: "bit/s",
            value: bits(1),
            limit: Rate::from_integer(budget.ulb_bitrate),
        },
        Verdict {
            constraint: "LB bitrate (all layers)",
            unit: "bit/s",
            value: bits(d.rvq.num_layers),
            limit: Rate::from_integer(budget.lb_bitrate),
        },
    ];
    Ok(ComplianceReport {
        model: d.name.clone(),
        budget: budget.clone(),
        rows,
        encoder_flops,
        rvq_encode_flops,
        rvq_decode_flops,
        decoder_flops,
        receive_side_flops,
        total_flops,
        total_mac,
        total_adds,
        latency,
        verdicts,
    })
}

fn scaled(v: &Verdict) -> (f64, f64) {
    match v.unit {
        "MFLOP/s" => (mega(&v.value), mega(&v.limit)),
        _ => (to_f64(&v.value), to_f64(&v.limit)),
    }
}

/// Fixed-width table for terminals.
pub fn render_table(r: &ComplianceReport) -> String {
    let mut s = String::new();
    writeln!(s, "model: {}    track {}", r.model, r.budget.track).unwrap();
    writeln!(
        s,
        "{:<15} {:<34} {:>10} {:>11} {:>10} {:>11}",
        "layer", "description", "rate (Hz)", "MMAC/s", "Madd/s", "MFLOP/s"
    )
    .unwrap();
    for row in &r.rows {
        let c = &row.cost;
        writeln!(
            s,
            "{:<15} {:<34} {:>10} {:>11.4} {:>10.4} {:>11.4}",
            row.id,
            row.description,
            format!("{:.0}", to_f64(&c.f_in)),
            mega(&c.mac),
            mega(&c.adds()),
            mega(&c.flop())
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    for (name, v) in [
        ("encoder", &r.encoder_flops),
        ("rvq encode", &r.rvq_encode_flops),
        ("rvq decode", &r.rvq_decode_flops),
        ("decoder", &r.decoder_flops),
        ("receive side", &r.receive_side_flops),
        ("total", &r.total_flops),
    ] {
        writeln!(s, "{name:<14} {:>12.4} MFLOP/s", mega(v)).unwrap();
    }
    let l = &r.latency;
    writeln!(
        s,
        "latency        {:.4} ms algorithmic + {:.4} ms buffering = {:.4} ms",
        to_f64(&l.algorithmic_ms),
        to_f64(&l.buffering_ms),
        to_f64(&l.total_ms)
    )
    .unwrap();
    writeln!(s).unwrap();
    for v in &r.verdicts {
        let (value, limit) = scaled(v);
        let status = if v.pass() { "PASS" } else { "FAIL" };
        let rel = if v.pass() { "≤" } else { ">" };
        let margin = limit - value;
        let what = if v.pass() { "margin" } else { "overshoot" };
        writeln!(
            s,
            "{status} {:<24} {value:.4} {rel} {limit} {} ({what} {:.4})",
            v.constraint,
            v.unit,
            margin.abs()
        )
        .unwrap();
    }
    s
}

fn rate_json(r: &Rate) -> Value {
    json!({ "exact": exact(r), "value": to_f64(r) })
}

/// Machine-readable report. Each rate carries its exact rational as a
/// string next to a floating-point value.
pub fn to_json(r: &ComplianceReport) -> Value {
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| {
            json!({
                "id": row.id,
                "description": row.description,
                "side": match row.side { Side::Transmit => "transmit", Side::Receive => "receive" },
                "input_rate_hz": rate_json(&row.cost.f_in),
                "output_rate_hz": rate_json(&row.cost.f_out),
                "mac_per_s": rate_json(&row.cost.mac),
                "bias_adds_per_s": rate_json(&row.cost.bias_adds),
                "other_adds_per_s": rate_json(&row.cost.other_adds),
                "flop_per_s": rate_json(&row.cost.flop()),
            })
        })
        .collect();
    let verdicts: Vec<Value> = r
        .verdicts
        .iter()
        .map(|v| {
            json!({
                "constraint": v.constraint,
                "unit": v.unit,
                "value": scaled(v).0,
                "limit": scaled(v).1,
                "pass": v.pass(),
            })
        })
        .collect();
    json!({
        "model": r.model,
        "track": r.budget.track,
        "rows": rows,
        "flop_per_s": {
            "encoder": rate_json(&r.encoder_flops),
            "rvq_encode": rate_json(&r.rvq_encode_flops),
            "rvq_decode": rate_json(&r.rvq_decode_flops),
            "decoder": rate_json(&r.decoder_flops),
            "receive_side": rate_json(&r.receive_side_flops),
            "total": rate_json(&r.total_flops),
        },
        "mac_per_s": rate_json(&r.total_mac),
        "adds_per_s": rate_json(&r.total_adds),
        "latency_ms": {
            "algorithmic": rate_json(&r.latency.algorithmic_ms),
            "buffering": rate_json(&r.latency.buffering_ms),
            "total": rate_json(&r.latency.total_ms),
        },
        "verdicts": verdicts,
        "pass": r.pass(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::builtin;
    use crate::nn::Activation;
    use proptest::prelude::*;

    fn reference() -> ModelDescriptor {
        ModelDescriptor::from_toml(builtin::REFERENCE_TRACK1).unwrap()
    }

    #[test]
    fn conv_example() {
        let c = layer_cost(&LayerSpec::conv1d(32, 32, 5, 2), int(24_000)).unwrap();
        assert_eq!(c.f_out, int(12_000));
        assert_eq!(c.mac, int(61_440_000));
        assert_eq!(c.bias_adds, int(384_000));
        assert_eq!(c.flop(), int(123_264_000));
    }

    #[test]
    fn linear_and_activation() {
        let c = layer_cost(&LayerSpec::linear(64, 64), int(100)).unwrap();
        assert_eq!(c.mac, int(409_600));
        assert_eq!(c.flop(), int(825_600));
        let a = layer_cost(&LayerSpec::activation(64, Activation::Elu), int(100)).unwrap();
        assert_eq!(a.flop(), zero());
        assert_eq!(layer_cost(&LayerSpec::linear(1, 1), zero()), Err(ComplianceError::Rate));
        let mut bad = LayerSpec::conv1d(1, 1, 1, 1);
        bad.stride = 0;
        assert!(matches!(layer_cost(&bad, int(1)), Err(ComplianceError::Layer(_))));
    }

    #[test]
    fn tconv_and_residual() {
        let c = layer_cost(&LayerSpec::tconv1d(16, 8, 4, 2), int(12_000)).unwrap();
        assert_eq!(c.f_out, int(24_000));
        assert_eq!(c.mac, int(8 * 16 * 4 * 12_000));
        assert_eq!(c.bias_adds, int(8 * 24_000));
        let r = layer_cost(&LayerSpec::residual(8, 3), int(100)).unwrap();
        assert_eq!(r.mac, int(8 * 8 * 3 * 100 + 8 * 8 * 100));
        assert_eq!(r.bias_adds, int(2 * 8 * 100));
        assert_eq!(r.other_adds, int(8 * 100));
    }

    #[test]
    fn rvq_examples() {
        let cfg = |l, d, projection| RvqConfig {
            num_layers: l,
            dim: d,
            model_dim: d,
            codebook_size: 1024,
            bits_per_index: 10,
            projection,
        };
        let c = rvq_cost(&cfg(6, 64, false), int(100));
        assert_eq!(c.search.mac, int(39_321_600));
        assert_eq!(c.search.flop(), int(78_643_200));
        assert_eq!(c.decode_side(), int(38_400));
        assert_eq!(rvq_cost(&cfg(1, 1, false), int(100)).search.mac, int(102_400));
        let p = rvq_cost(&cfg(6, 64, true), int(100));
        assert_eq!(p.in_proj.flop(), int(2 * 64 * 64 * 100 + 64 * 100));
    }

    fn with_extra(mut d: ModelDescriptor, at: usize, spec: LayerSpec) -> ModelDescriptor {
        d.encoder.insert(at, spec);
        d
    }

    #[test]
    fn latency_examples() {
        let d = reference();
        let l = latency(&d);
        assert_eq!((l.algorithmic_ms, l.buffering_ms, l.total_ms), (zero(), int(10), int(10)));
        // An embedding-rate layer looking two frames ahead.
        let n = d.encoder.len();
        let la = with_extra(d, n, LayerSpec::conv1d(128, 128, 3, 1).with_lookahead(2));
        let l = latency(&la);
        assert_eq!((l.algorithmic_ms, l.total_ms), (int(20), int(30)));
        let mut tiny = ModelDescriptor::from_toml(builtin::TOY_FRAMING).unwrap();
        tiny.frame_hop = 1;
        tiny.encoder.clear();
        tiny.decoder.clear();
        tiny.rvq.model_dim = 1;
        tiny.rvq.dim = 1;
        tiny.validate().unwrap();
        assert_eq!(latency(&tiny).total_ms, Rate::new(1, 24));
    }

    #[test]
    fn decoder_lookahead_uses_decoder_rate() {
        let mut d = reference();
        // The final convolution runs at 24 kHz.
        let last = d.decoder.len() - 2;
        d.decoder[last].lookahead = 3;
        let l = latency(&d);
        assert_eq!(l.algorithmic_ms, Rate::new(3 * 1000, 24_000));
    }

    #[test]
    fn reference_passes_track1_and_track2() {
        let d = reference();
        for track in [1, 2] {
            let r = analyze(&d, &Budget::track(track).unwrap()).unwrap();
            assert!(r.pass(), "{}", render_table(&r));
        }
        let r = analyze(&d, &Budget::track(1).unwrap()).unwrap();
        assert_eq!(r.receive_side_flops, r.decoder_flops + r.rvq_decode_flops);
        assert_eq!(
            r.total_flops,
            r.encoder_flops + r.rvq_encode_flops + r.rvq_decode_flops + r.decoder_flops
        );
        assert_eq!(r.total_flops, r.total_mac * 2 + r.total_adds);
        let t2 = analyze(&d, &Budget::track(2).unwrap()).unwrap();
        for (a, b) in r.verdicts.iter().zip(&t2.verdicts) {
            assert!(b.margin() >= a.margin());
        }
        let json = to_json(&r);
        assert_eq!(json["pass"], true);
        assert_eq!(json["latency_ms"]["total"]["exact"], "10");
    }

    #[test]
    fn oversized_layer_fails_total() {
        let mut d = reference();
        let n = d.encoder.len();
        d.encoder[n - 1].out_channels = 10_000;
        d.rvq.model_dim = 10_000;
        d.decoder[0].in_channels = 10_000;
        d.decoder[0].out_channels = 10_000;
        d.decoder[1].in_channels = 10_000;
        let r = analyze(&d, &Budget::track(1).unwrap()).unwrap();
        assert!(!r.pass());
        let total = &r.verdicts[1];
        assert!(!total.pass() && total.margin() < zero());
        let table = render_table(&r);
        assert!(table.contains("FAIL total complexity"), "{table}");
        assert!(table.contains("overshoot"));
        assert_eq!(Budget::track(3), Err(ComplianceError::Track(3)));
    }

    fn arb_spec(channels: usize) -> impl Strategy<Value = LayerSpec> {
        (0usize..5, 1usize..8, 1usize..9, 1usize..4, 0usize..3).prop_map(move |(kind, out, k, s, la)| {
            let la = la.min(k - 1);
            match kind {
                0 => LayerSpec::conv1d(channels, out, k, s).with_lookahead(la),
                1 => LayerSpec::tconv1d(channels, out, k, s),
                2 => LayerSpec::linear(channels, out),
                3 => LayerSpec::residual(channels, k).with_lookahead(la),
                _ => LayerSpec::activation(channels, Activation::Relu),
            }
        })
    }

    proptest! {
        #[test]
        fn flop_is_twice_mac_plus_adds(spec in (1usize..8).prop_flat_map(arb_spec),
                                        f in 1i128..50_000) {
            let c = layer_cost(&spec, Rate::from_integer(f)).unwrap();
            prop_assert_eq!(c.flop(), c.mac * 2 + c.bias_adds + c.other_adds);
            if spec.kind == LayerKind::Activation {
                prop_assert_eq!(c.flop(), zero());
            }
        }
    }
}
