//! Layer wiring of the four autoencoder architectures.

use crate::autodiff::{NormStats, Tape, Tensor, Var};
use crate::num::Scalar;

use super::layout::{Init, ParamLayout, Part};
use super::{Architecture, LatentHead};

pub(crate) const FCNN_WIDTHS: [usize; 3] = [500, 500, 2000];
pub(crate) const CNN_CHANNELS: [usize; 3] = [32, 64, 64];
pub(crate) const CNN_KERNEL: usize = 3;
pub(crate) const LSTM_HIDDEN: usize = 64;
pub(crate) const DTC_CONV_CHANNELS: usize = 32;
pub(crate) const DTC_CONV_KERNEL: usize = 7;
pub(crate) const DTC_POOL: usize = 10;
pub(crate) const DTC_HIDDEN: usize = 50;
const DTC_LEAK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer {
    w: usize,
    b: usize,
    pad: usize,
    transposed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Norm {
    gamma: usize,
    beta: usize,
    slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResBlock {
    conv1: ConvLayer,
    norm1: Norm,
    conv2: ConvLayer,
    norm2: Option<Norm>,
    skip: Option<ConvLayer>,
    out_relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstmCell {
    w: usize,
    b: usize,
    hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BiLstm {
    layers: Vec<(LstmCell, LstmCell)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Net {
    Fcnn {
        enc: Vec<Dense>,
        embed: Dense,
        dec: Vec<Dense>,
    },
    Cnn {
        enc: Vec<ResBlock>,
        embed: Dense,
        dec_in: Dense,
        dec: Vec<ResBlock>,
    },
    Lstm {
        enc: BiLstm,
        embed: Dense,
        dec: BiLstm,
        out: Dense,
    },
    Dtc {
        conv: ConvLayer,
        enc: BiLstm,
        deconv: ConvLayer,
    },
}

struct Builder {
    layout: ParamLayout,
    norms: usize,
}

impl Builder {
    fn dense(&mut self, name: &str, input: usize, output: usize) -> Dense {
        let bound = 1.0 / (input as f64).sqrt();
        Dense {
            w: self.layout.push(format!("{name}.w"), vec![input, output], Init::Uniform(bound)),
            b: self.layout.push(format!("{name}.b"), vec![output], Init::Uniform(bound)),
        }
    }

    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, kernel: usize, transposed: bool) -> ConvLayer {
        let bound = 1.0 / ((c_in * kernel) as f64).sqrt();
        let shape = if transposed {
            vec![c_in, c_out, kernel]
        } else {
            vec![c_out, c_in, kernel]
        };
        ConvLayer {
            w: self.layout.push(format!("{name}.w"), shape, Init::Uniform(bound)),
            b: self.layout.push(format!("{name}.b"), vec![c_out], Init::Uniform(bound)),
            pad: (kernel - 1) / 2,
            transposed,
        }
    }

    fn norm(&mut self, name: &str, channels: usize) -> Norm {
        let n = Norm {
            gamma: self.layout.push(format!("{name}.gamma"), vec![channels], Init::Ones),
            beta: self.layout.push(format!("{name}.beta"), vec![channels], Init::Zeros),
            slot: self.norms,
        };
        self.norms += 1;
        n
    }

    fn res_block(&mut self, name: &str, c_in: usize, c_out: usize, transposed: bool, last: bool) -> ResBlock {
        let mid = if last { c_in } else { c_out };
        let conv1 = self.conv(&format!("{name}.conv1"), c_in, mid, CNN_KERNEL, transposed);
        let norm1 = self.norm(&format!("{name}.norm1"), mid);
        let conv2 = self.conv(&format!("{name}.conv2"), mid, c_out, CNN_KERNEL, transposed);
        let norm2 = (!last).then(|| self.norm(&format!("{name}.norm2"), c_out));
        let skip = (c_in != c_out).then(|| self.conv(&format!("{name}.skip"), c_in, c_out, 1, transposed));
        ResBlock {
            conv1,
            norm1,
            conv2,
            norm2,
            skip,
            out_relu: !last,
        }
    }

    fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> BiLstm {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut layers = Vec::new();
        let mut width = input;
        for l in 0..2 {
            let mut cell = |dir: &str| LstmCell {
                w: self.layout.push(
                    format!("{name}.l{l}.{dir}.w"),
                    vec![width + hidden, 4 * hidden],
                    Init::Uniform(bound),
                ),
                b: self
                    .layout
                    .push(format!("{name}.l{l}.{dir}.b"), vec![4 * hidden], Init::Uniform(bound)),
                hidden,
            };
            let fwd = cell("fwd");
            let bwd = cell("bwd");
            layers.push((fwd, bwd));
            width = 2 * hidden;
        }
        BiLstm { layers }
    }
}

/// Builds the parameter layout and wiring; returns the number of normalisation layers.
pub(crate) fn build(
    arch: Architecture,
    input_len: usize,
    latent_dim: usize,
    head: LatentHead,
) -> (ParamLayout, Net, usize) {
    let mut b = Builder {
        layout: ParamLayout::default(),
        norms: 0,
    };
    let embed_out = match head {
        LatentHead::Deterministic => latent_dim,
        LatentHead::Gaussian => 2 * latent_dim,
    };
    b.layout.begin(Part::Encoder);
    let net = match arch {
        Architecture::Fcnn => {
            let mut enc = Vec::new();
            let mut width = input_len;
            for (i, &w) in FCNN_WIDTHS.iter().enumerate() {
                enc.push(b.dense(&format!("enc{i}"), width, w));
                width = w;
            }
            let embed = b.dense("embed", width, embed_out);
            b.layout.begin(Part::Decoder);
            let mut dec = Vec::new();
            let mut width = latent_dim;
            for (i, &w) in FCNN_WIDTHS.iter().rev().enumerate() {
                dec.push(b.dense(&format!("dec{i}"), width, w));
                width = w;
            }
            dec.push(b.dense("out", width, input_len));
            Net::Fcnn { enc, embed, dec }
        }
        Architecture::Cnn => {
            let mut enc = Vec::new();
            let mut c = 1;
            for (i, &co) in CNN_CHANNELS.iter().enumerate() {
                enc.push(b.res_block(&format!("enc{i}"), c, co, false, false));
                c = co;
            }
            let embed = b.dense("embed", c, embed_out);
            b.layout.begin(Part::Decoder);
            let top = CNN_CHANNELS[2];
            let dec_in = b.dense("dec_in", latent_dim, top * input_len);
            // Mirror: 64 -> 64 -> 32 -> 1.
            let mut dec = Vec::new();
            let mut c = top;
            let targets = [CNN_CHANNELS[1], CNN_CHANNELS[0], 1];
            for (i, &co) in targets.iter().enumerate() {
                dec.push(b.res_block(&format!("dec{i}"), c, co, true, i == targets.len() - 1));
                c = co;
            }
            Net::Cnn {
                enc,
                embed,
                dec_in,
                dec,
            }
        }
        Architecture::Lstm => {
            let enc = b.lstm("enc", 1, LSTM_HIDDEN);
            let embed = b.dense("embed", 2 * LSTM_HIDDEN, embed_out);
            b.layout.begin(Part::Decoder);
            let dec = b.lstm("dec", latent_dim, LSTM_HIDDEN);
            let out = b.dense("out", 2 * LSTM_HIDDEN, 1);
            Net::Lstm {
                enc,
                embed,
                dec,
                out,
            }
        }
        Architecture::Dtc => {
            let conv = b.conv("conv", 1, DTC_CONV_CHANNELS, DTC_CONV_KERNEL, false);
            let enc = b.lstm("enc", DTC_CONV_CHANNELS, DTC_HIDDEN);
            b.layout.begin(Part::Decoder);
            let deconv = b.conv("deconv", 2 * DTC_HIDDEN, 1, DTC_CONV_KERNEL, true);
            Net::Dtc { conv, enc, deconv }
        }
    };
    (b.layout, net, b.norms)
}

/// Forward-evaluation state for one tape.
pub(crate) struct Fwd<'a, S> {
    pub tape: &'a mut Tape<S>,
    pub params: &'a [Var],
    pub frozen: Option<&'a [NormStats<S>]>,
    pub captured: Vec<Option<NormStats<S>>>,
}

pub(crate) struct Encoded {
    pub latent: Var,
    pub logvar: Option<Var>,
    pub taps: Vec<Var>,
}

pub(crate) struct Decoded {
    pub recon: Var,
    pub taps: Vec<Var>,
}

impl<S: Scalar> Fwd<'_, S> {
    fn p(&self, i: usize) -> Var {
        self.params[i]
    }

    fn dense(&mut self, d: &Dense, x: Var) -> Var {
        let h = self.tape.matmul(x, self.p(d.w));
        self.tape.add_bias(h, self.p(d.b))
    }

    fn conv(&mut self, c: &ConvLayer, x: Var) -> Var {
        if c.transposed {
            self.tape.conv_transpose1d(x, self.p(c.w), self.p(c.b), c.pad)
        } else {
            self.tape.conv1d(x, self.p(c.w), self.p(c.b), c.pad)
        }
    }

    fn norm(&mut self, n: &Norm, x: Var) -> Var {
        let frozen = self.frozen.map(|f| &f[n.slot]);
        let (y, stats) = self.tape.channel_norm(x, self.p(n.gamma), self.p(n.beta), frozen);
        if frozen.is_none() {
            self.captured[n.slot] = Some(stats);
        }
        y
    }

    fn res_block(&mut self, r: &ResBlock, x: Var) -> Var {
        let h = self.conv(&r.conv1, x);
        let h = self.norm(&r.norm1, h);
        let h = self.tape.relu(h);
        let mut h = self.conv(&r.conv2, h);
        if let Some(n) = &r.norm2 {
            h = self.norm(n, h);
        }
        let s = match &r.skip {
            Some(c) => self.conv(c, x),
            None => x,
        };
        let y = self.tape.add(h, s);
        if r.out_relu {
            self.tape.relu(y)
        } else {
            y
        }
    }

    fn lstm_cell(&mut self, cell: &LstmCell, x: Var, h: Var, c: Var) -> (Var, Var) {
        let hd = cell.hidden;
        let xh = self.tape.concat_cols(&[x, h]);
        let gates = self.tape.matmul(xh, self.p(cell.w));
        let gates = self.tape.add_bias(gates, self.p(cell.b));
        let i = self.tape.slice_cols(gates, 0, hd);
        let f = self.tape.slice_cols(gates, hd, hd);
        let g = self.tape.slice_cols(gates, 2 * hd, hd);
        let o = self.tape.slice_cols(gates, 3 * hd, hd);
        let i = self.tape.sigmoid(i);
        let f = self.tape.sigmoid(f);
        let g = self.tape.tanh(g);
        let o = self.tape.sigmoid(o);
        let fc = self.tape.mul(f, c);
        let ig = self.tape.mul(i, g);
        let c = self.tape.add(fc, ig);
        let tc = self.tape.tanh(c);
        let h = self.tape.mul(o, tc);
        (h, c)
    }

    /// Runs a two-layer bidirectional LSTM; returns per-step outputs and the
    /// top layer's final forward and backward hidden states.
    fn bilstm(&mut self, net: &BiLstm, inputs: &[Var]) -> (Vec<Var>, Var, Var) {
        let n = self.tape.shape(inputs[0])[0];
        let steps = inputs.len();
        let mut seq = inputs.to_vec();
        let mut finals = (seq[0], seq[0]);
        for (fwd, bwd) in &net.layers {
            let zero = self.tape.constant(Tensor::zeros(vec![n, fwd.hidden]));
            let (mut h, mut c) = (zero, zero);
            let mut hf = Vec::with_capacity(steps);
            for &x in &seq {
                (h, c) = self.lstm_cell(fwd, x, h, c);
                hf.push(h);
            }
            let (mut h, mut c) = (zero, zero);
            let mut hb = vec![zero; steps];
            for t in (0..steps).rev() {
                (h, c) = self.lstm_cell(bwd, seq[t], h, c);
                hb[t] = h;
            }
            finals = (hf[steps - 1], hb[0]);
            seq = hf
                .iter()
                .zip(&hb)
                .map(|(&a, &b)| self.tape.concat_cols(&[a, b]))
                .collect();
        }
        (seq, finals.0, finals.1)
    }

    fn split_head(&mut self, e: Var, head: LatentHead, d: usize) -> (Var, Option<Var>) {
        match head {
            LatentHead::Deterministic => (e, None),
            LatentHead::Gaussian => {
                let mu = self.tape.slice_cols(e, 0, d);
                let lv = self.tape.slice_cols(e, d, d);
                (mu, Some(lv))
            }
        }
    }

    pub fn encode(&mut self, net: &Net, x: Var, head: LatentHead, d: usize) -> Encoded {
        let (n, t) = (self.tape.shape(x)[0], self.tape.shape(x)[1]);
        match net {
            Net::Fcnn { enc, embed, .. } => {
                let mut taps = vec![x];
                let mut h = x;
                for layer in enc {
                    let a = self.dense(layer, h);
                    h = self.tape.relu(a);
                    taps.push(h);
                }
                let e = self.dense(embed, h);
                let (latent, logvar) = self.split_head(e, head, d);
                Encoded { latent, logvar, taps }
            }
            Net::Cnn { enc, embed, .. } => {
                let x3 = self.tape.reshape(x, vec![n, 1, t]);
                let mut taps = vec![x3];
                let mut h = x3;
                for block in enc {
                    h = self.res_block(block, h);
                    taps.push(h);
                }
                let g = self.tape.global_avg_pool(h);
                let e = self.dense(embed, g);
                let (latent, logvar) = self.split_head(e, head, d);
                Encoded { latent, logvar, taps }
            }
            Net::Lstm { enc, embed, .. } => {
                let xs: Vec<Var> = (0..t).map(|s| self.tape.slice_cols(x, s, 1)).collect();
                let (_, hf, hb) = self.bilstm(enc, &xs);
                let fin = self.tape.concat_cols(&[hf, hb]);
                let e = self.dense(embed, fin);
                let (latent, logvar) = self.split_head(e, head, d);
                Encoded {
                    latent,
                    logvar,
                    taps: Vec::new(),
                }
            }
            Net::Dtc { conv, enc, .. } => {
                let x3 = self.tape.reshape(x, vec![n, 1, t]);
                let h = self.conv(conv, x3);
                let h = self.tape.leaky_relu(h, S::of(DTC_LEAK));
                let h = self.tape.max_pool1d(h, DTC_POOL);
                let steps = t / DTC_POOL;
                let xs: Vec<Var> = (0..steps).map(|s| self.tape.time_slice(h, s)).collect();
                let (seq, _, _) = self.bilstm(enc, &xs);
                let latent = self.tape.concat_cols(&seq);
                Encoded {
                    latent,
                    logvar: None,
                    taps: Vec::new(),
                }
            }
        }
    }

    pub fn decode(&mut self, net: &Net, z: Var, input_len: usize) -> Decoded {
        let n = self.tape.shape(z)[0];
        match net {
            Net::Fcnn { dec, .. } => {
                let mut taps = Vec::new();
                let mut h = z;
                for (i, layer) in dec.iter().enumerate() {
                    let a = self.dense(layer, h);
                    h = if i + 1 < dec.len() { self.tape.relu(a) } else { a };
                    taps.push(h);
                }
                Decoded { recon: h, taps }
            }
            Net::Cnn { dec_in, dec, .. } => {
                let top = CNN_CHANNELS[2];
                let a = self.dense(dec_in, z);
                let a = self.tape.relu(a);
                let mut h = self.tape.reshape(a, vec![n, top, input_len]);
                let mut taps = vec![h];
                for block in dec {
                    h = self.res_block(block, h);
                    taps.push(h);
                }
                let recon = self.tape.reshape(h, vec![n, input_len]);
                Decoded { recon, taps }
            }
            Net::Lstm { dec, out, .. } => {
                let xs = vec![z; input_len];
                let (seq, _, _) = self.bilstm(dec, &xs);
                let cols: Vec<Var> = seq.iter().map(|&s| self.dense(out, s)).collect();
                let recon = self.tape.concat_cols(&cols);
                Decoded {
                    recon,
                    taps: Vec::new(),
                }
            }
            Net::Dtc { deconv, .. } => {
                let steps = input_len / DTC_POOL;
                let up = self.tape.upsample(z, steps, 2 * DTC_HIDDEN, DTC_POOL);
                let h = self.conv(deconv, up);
                let recon = self.tape.reshape(h, vec![n, input_len]);
                Decoded {
                    recon,
                    taps: Vec::new(),
                }
            }
        }
    }
}
