use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Graph, ParamId, ParameterStore, Tensor, Var};

/// Train or eval behaviour for a forward pass.
///
/// In training mode dropout masks are drawn from a seeded generator, so a
/// forward pass is reproducible given its seed.
#[derive(Debug, Clone)]
pub struct Mode {
    dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl Mode {
    pub fn eval() -> Self {
        Self {
            dropout: 0.0,
            rng: None,
        }
    }

    pub fn train(dropout: f64, seed: u64) -> Self {
        Self {
            dropout,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout(&mut self, g: &mut Graph, x: Var) -> Var {
        match &mut self.rng {
            Some(rng) if self.dropout > 0.0 => g.dropout(x, self.dropout, rng),
            _ => x,
        }
    }
}

/// Affine map `x · Wᵀ + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        let w = store.add(&format!("{name}.w"), Tensor::from_vec(out_dim, in_dim, data))?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(1, out_dim))?;
        Ok(Self { w, b })
    }

    pub fn from_store(store: &ParameterStore, name: &str) -> Result<Self, AutodiffError> {
        let find = |suffix: &str| {
            let full = format!("{name}.{suffix}");
            store.id(&full).ok_or(AutodiffError::UnknownParameter(full))
        };
        Ok(Self {
            w: find("w")?,
            b: find("b")?,
        })
    }

    pub fn in_dim(&self, store: &ParameterStore) -> usize {
        store.value(self.w).cols()
    }

    pub fn out_dim(&self, store: &ParameterStore) -> usize {
        store.value(self.w).rows()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: Var) -> Result<Var, AutodiffError> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.linear(x, w, b)
    }
}

/// Gated recurrent unit, applied row-wise:
///
/// ```text
/// r  = σ(W_ir x + W_hr h)      z = σ(W_iz x + W_hz h)
/// n  = tanh(W_in x + r ⊙ (W_hn h))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    ir: Linear,
    iz: Linear,
    in_: Linear,
    hr: Linear,
    hz: Linear,
    hn: Linear,
}

const GRU_PARTS: [&str; 6] = ["ir", "iz", "in", "hr", "hz", "hn"];

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        let mut parts = Vec::with_capacity(6);
        for (i, part) in GRU_PARTS.iter().enumerate() {
            let in_dim = if i < 3 { input_dim } else { hidden_dim };
            parts.push(Linear::new(store, &format!("{name}.{part}"), in_dim, hidden_dim, rng)?);
        }
        Ok(Self::from_parts(&parts))
    }

    pub fn from_store(store: &ParameterStore, name: &str) -> Result<Self, AutodiffError> {
        let parts = GRU_PARTS
            .iter()
            .map(|p| Linear::from_store(store, &format!("{name}.{p}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_parts(&parts))
    }

    fn from_parts(p: &[Linear]) -> Self {
        Self {
            ir: p[0],
            iz: p[1],
            in_: p[2],
            hr: p[3],
            hz: p[4],
            hn: p[5],
        }
    }

    pub fn linears(&self) -> [Linear; 6] {
        [self.ir, self.iz, self.in_, self.hr, self.hz, self.hn]
    }

    pub fn hidden_dim(&self, store: &ParameterStore) -> usize {
        self.hr.out_dim(store)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: Var, h: Var) -> Result<Var, AutodiffError> {
        let (xs, hs) = (g.shape(x), g.shape(h));
        if xs.0 != hs.0 || xs.1 != self.ir.in_dim(store) || hs.1 != self.hr.in_dim(store) {
            return Err(AutodiffError::ShapeMismatch {
                op: "gru_cell",
                left: xs,
                right: hs,
            });
        }
        let xr = self.ir.forward(g, store, x)?;
        let hr = self.hr.forward(g, store, h)?;
        let pre_r = g.add(xr, hr)?;
        let r = g.sigmoid(pre_r);

        let xz = self.iz.forward(g, store, x)?;
        let hz = self.hz.forward(g, store, h)?;
        let pre_z = g.add(xz, hz)?;
        let z = g.sigmoid(pre_z);

        let xn = self.in_.forward(g, store, x)?;
        let hn = self.hn.forward(g, store, h)?;
        let gated = g.mul(r, hn)?;
        let pre_n = g.add(xn, gated)?;
        let n = g.tanh(pre_n);

        let diff = g.sub(h, n)?;
        let carry = g.mul(z, diff)?;
        g.add(n, carry)
    }
}

/// Two-layer perceptron with GELU hidden activation and a softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp2 {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp2 {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        dim: usize,
        labels: usize,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), dim, dim, rng)?,
            output: Linear::new(store, &format!("{name}.output"), dim, labels, rng)?,
        })
    }

    pub fn from_store(store: &ParameterStore, name: &str) -> Result<Self, AutodiffError> {
        Ok(Self {
            hidden: Linear::from_store(store, &format!("{name}.hidden"))?,
            output: Linear::from_store(store, &format!("{name}.output"))?,
        })
    }

    /// Pre-softmax scores; dropout (training only) follows the hidden activation.
    pub fn logits(&self, g: &mut Graph, store: &ParameterStore, x: Var, mode: &mut Mode) -> Result<Var, AutodiffError> {
        let pre = self.hidden.forward(g, store, x)?;
        let act = g.gelu(pre);
        let act = mode.dropout(g, act);
        self.output.forward(g, store, act)
    }

    pub fn probabilities(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        x: Var,
        mode: &mut Mode,
    ) -> Result<Var, AutodiffError> {
        let logits = self.logits(g, store, x, mode)?;
        Ok(g.softmax_rows(logits))
    }

    /// Rows of the output weight matrix double as label embeddings.
    pub fn label_embeddings(&self, g: &mut Graph, store: &ParameterStore, labels: &[usize]) -> Result<Var, AutodiffError> {
        let w = g.param(store, self.output.w);
        g.gather_rows(w, labels)
    }
}

/// `h + softmax(h · H0ᵀ) · H0`, row-wise over `h`.
pub fn attention_mix(g: &mut Graph, h: Var, h0: Var) -> Result<Var, AutodiffError> {
    let scores = g.matmul_nt(h, h0)?;
    let alpha = g.softmax_rows(scores);
    let context = g.matmul(alpha, h0)?;
    g.add(h, context)
}

/// `-ln pred[gold]` for an already-normalized distribution.
pub fn cross_entropy(pred: &[f64], gold: usize) -> Result<f64, AutodiffError> {
    pred.get(gold)
        .map(|p| -p.ln())
        .ok_or(AutodiffError::IndexOutOfRange {
            index: gold,
            len: pred.len(),
        })
}
