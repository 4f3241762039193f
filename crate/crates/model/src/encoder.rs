//! A small residual CNN encoder: head conv, B residual blocks, tail
//! conv with a global skip from the head. Output keeps the input
//! resolution. Stands in for the large published encoders.

use std::collections::BTreeMap;

use igkit_core::autograd::{Graph, Var};
use igkit_core::{CoreError, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderCfg {
    pub ce: usize,
    pub blocks: usize,
}

impl Default for EncoderCfg {
    fn default() -> Self {
        EncoderCfg { ce: 32, blocks: 4 }
    }
}

#[derive(Clone, Debug)]
struct ConvParams {
    w: Tensor,
    b: Tensor,
}

#[derive(Clone, Debug)]
pub struct TinyEncoder {
    pub cfg: EncoderCfg,
    head: ConvParams,
    blocks: Vec<(ConvParams, ConvParams)>,
    tail: ConvParams,
}

fn conv_init(rng: &mut Rng, c_out: usize, c_in: usize, gain: f64) -> ConvParams {
    let fan_in = c_in * 9;
    let std = (2.0 / fan_in as f64).sqrt() * gain;
    let mut w = vec![0.0; c_out * c_in * 9];
    rng.fill_normal(&mut w, std);
    ConvParams {
        w: Tensor::from_vec(&[c_out, c_in, 3, 3], w).expect("conv shape"),
        b: Tensor::zeros(&[c_out]),
    }
}

impl TinyEncoder {
    pub fn init(cfg: EncoderCfg, rng: &mut Rng) -> Self {
        let head = conv_init(rng, cfg.ce, 3, 1.0);
        let blocks = (0..cfg.blocks)
            .map(|_| {
                let a = conv_init(rng, cfg.ce, cfg.ce, 1.0);
                // Damped second conv keeps early residuals small.
                let b = conv_init(rng, cfg.ce, cfg.ce, 0.1);
                (a, b)
            })
            .collect();
        let tail = conv_init(rng, cfg.ce, cfg.ce, 0.1);
        TinyEncoder { cfg, head, blocks, tail }
    }

    pub fn param_count(&self) -> usize {
        let conv = |p: &ConvParams| p.w.numel() + p.b.numel();
        conv(&self.head)
            + self.blocks.iter().map(|(a, b)| conv(a) + conv(b)).sum::<usize>()
            + conv(&self.tail)
    }

    pub fn state_dict(&self, prefix: &str, out: &mut BTreeMap<String, Tensor>) {
        let put = |out: &mut BTreeMap<String, Tensor>, name: String, p: &ConvParams| {
            out.insert(format!("{name}.w"), p.w.clone());
            out.insert(format!("{name}.b"), p.b.clone());
        };
        put(out, format!("{prefix}.head"), &self.head);
        for (i, (a, b)) in self.blocks.iter().enumerate() {
            put(out, format!("{prefix}.block{i}.conv0"), a);
            put(out, format!("{prefix}.block{i}.conv1"), b);
        }
        put(out, format!("{prefix}.tail"), &self.tail);
    }

    pub fn from_state(
        cfg: EncoderCfg,
        prefix: &str,
        dict: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let get = |name: String| -> Result<ConvParams> {
            let w = dict
                .get(&format!("{name}.w"))
                .cloned()
                .ok_or_else(|| CoreError::invalid("checkpoint", format!("missing {name}.w")))?;
            let b = dict
                .get(&format!("{name}.b"))
                .cloned()
                .ok_or_else(|| CoreError::invalid("checkpoint", format!("missing {name}.b")))?;
            Ok(ConvParams { w, b })
        };
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            blocks.push((
                get(format!("{prefix}.block{i}.conv0"))?,
                get(format!("{prefix}.block{i}.conv1"))?,
            ));
        }
        Ok(TinyEncoder {
            cfg,
            head: get(format!("{prefix}.head"))?,
            blocks,
            tail: get(format!("{prefix}.tail"))?,
        })
    }

    pub fn mount(&self, g: &Graph, prefix: &str, trainable: bool) -> Result<TinyEncoderVars> {
        let leaf = |g: &Graph, name: String, t: &Tensor| -> Result<Var> {
            if trainable {
                g.param(&name, t.clone())
            } else {
                Ok(g.constant(t.clone()))
            }
        };
        let conv = |g: &Graph, name: String, p: &ConvParams| -> Result<(Var, Var)> {
            Ok((leaf(g, format!("{name}.w"), &p.w)?, leaf(g, format!("{name}.b"), &p.b)?))
        };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, (a, b)) in self.blocks.iter().enumerate() {
            blocks.push((
                conv(g, format!("{prefix}.block{i}.conv0"), a)?,
                conv(g, format!("{prefix}.block{i}.conv1"), b)?,
            ));
        }
        Ok(TinyEncoderVars {
            head: conv(g, format!("{prefix}.head"), &self.head)?,
            blocks,
            tail: conv(g, format!("{prefix}.tail"), &self.tail)?,
        })
    }
}

pub struct TinyEncoderVars {
    head: (Var, Var),
    blocks: Vec<((Var, Var), (Var, Var))>,
    tail: (Var, Var),
}

impl TinyEncoderVars {
    /// Feature map M with the input's spatial size.
    pub fn forward(&self, x: &Var) -> Var {
        self.forward_with_taps(x).0
    }

    /// Also returns per-stage activations in network order, for the
    /// representation-similarity analysis.
    pub fn forward_with_taps(&self, x: &Var) -> (Var, Vec<(String, Var)>) {
        let mut taps = Vec::new();
        let h = x.conv2d(&self.head.0, 1).add_channel_bias(&self.head.1);
        taps.push(("head".to_string(), h.clone()));
        let mut cur = h.clone();
        for (i, ((w1, b1), (w2, b2))) in self.blocks.iter().enumerate() {
            let y = cur
                .conv2d(w1, 1)
                .add_channel_bias(b1)
                .relu()
                .conv2d(w2, 1)
                .add_channel_bias(b2);
            cur = cur.add(&y);
            taps.push((format!("block{i}"), cur.clone()));
        }
        let t = cur.conv2d(&self.tail.0, 1).add_channel_bias(&self.tail.1);
        let m = t.add(&h);
        taps.push(("tail".to_string(), m.clone()));
        (m, taps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_keeps_spatial_size() {
        let mut rng = Rng::new(210);
        let enc = TinyEncoder::init(EncoderCfg { ce: 8, blocks: 2 }, &mut rng);
        let g = Graph::new();
        let vars = enc.mount(&g, "enc", false).unwrap();
        let mut data = vec![0.0; 3 * 7 * 11];
        rng.fill_uniform(&mut data, 0.0, 1.0);
        let x = g.constant(Tensor::from_vec(&[1, 3, 7, 11], data).unwrap());
        let (m, taps) = vars.forward_with_taps(&x);
        assert_eq!(m.shape(), vec![1, 8, 7, 11]);
        assert_eq!(taps.len(), 2 + 2);
        assert_eq!(taps[0].0, "head");
        assert_eq!(taps.last().unwrap().0, "tail");
    }

    #[test]
    fn state_dict_round_trips() {
        let mut rng = Rng::new(211);
        let cfg = EncoderCfg { ce: 6, blocks: 2 };
        let enc = TinyEncoder::init(cfg, &mut rng);
        let mut dict = BTreeMap::new();
        enc.state_dict("enc", &mut dict);
        let back = TinyEncoder::from_state(cfg, "enc", &dict).unwrap();
        let g = Graph::new();
        let v1 = enc.mount(&g, "a", false).unwrap();
        let v2 = back.mount(&g, "b", false).unwrap();
        let mut data = vec![0.0; 3 * 5 * 5];
        rng.fill_uniform(&mut data, 0.0, 1.0);
        let x = g.constant(Tensor::from_vec(&[1, 3, 5, 5], data).unwrap());
        assert_eq!(v1.forward(&x).value().to_vec(), v2.forward(&x).value().to_vec());
    }

    #[test]
    fn param_count_matches_dict_walk() {
        let mut rng = Rng::new(212);
        let enc = TinyEncoder::init(EncoderCfg { ce: 8, blocks: 3 }, &mut rng);
        let mut dict = BTreeMap::new();
        enc.state_dict("enc", &mut dict);
        let walked: usize = dict.values().map(|t| t.numel()).sum();
        assert_eq!(walked, enc.param_count());
    }
}
