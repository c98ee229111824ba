//! Graph autoencoder: two-layer GCN encoder, two-layer GCN feature decoder
//! and a one-layer GCN + inner-product structure decoder.
//!
//! The training objective is `α‖X − X̂‖ + (1 − α)‖A − Â‖` (Frobenius norms,
//! optionally squared). With `α = 1` the structure decoder is never built,
//! so neither training nor scoring touches the `n × n` term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NormalizedAdjacency};
use crate::nn::layers::{dropout_mask, gcn_backward, gcn_layer, Activation};
use crate::nn::tensor::{dot, Matrix};
use crate::nn::{adam_step, AdamConfig, Checkpoint, Gradients, ParamStore};
use crate::par;

const ENC1: &str = "enc1";
const ENC2: &str = "enc2";
const DEC1: &str = "dec1";
const DEC2: &str = "dec2";
const STRUCT: &str = "struct";

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    pub latent_dim: usize,
    /// Width between the two GCN layers of encoder and feature decoder.
    /// `None` means `2 * latent_dim`.
    pub hidden_dim: Option<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub alpha: f64,
    /// Use squared Frobenius norms in the loss and node scores.
    pub squared_norm: bool,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            latent_dim: 8,
            hidden_dim: None,
            dropout: 0.1,
            lr: 0.01,
            epochs: 300,
            alpha: 0.5,
            squared_norm: false,
            seed: 0,
        }
    }
}

impl AeConfig {
    pub fn hidden(&self) -> usize {
        self.hidden_dim.unwrap_or(2 * self.latent_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.latent_dim == 0 || self.hidden() == 0 {
            return Err(Error::InvalidArgument("latent and hidden dims must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Per-node latent vectors; row `v` embeds node `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding {
    pub z: Matrix,
    pub provenance: String,
}

impl LatentEmbedding {
    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }
}

/// Decoder output. `adjacency` is `None` when `α = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub features: Matrix,
    pub adjacency: Option<Matrix>,
}

/// Loss value with its per-node decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct AeLoss {
    pub total: f64,
    /// `α · feature_row + (1 − α) · structure_row` per node.
    pub per_node: Vec<f64>,
    /// `‖X − X̂‖` (or its square).
    pub feature_term: f64,
    pub structure_term: f64,
    /// Row norms `‖x_v − x̂_v‖`.
    pub feature_rows: Vec<f64>,
    /// Row norms `‖a_v − â_v‖`; zeros when `α = 1`.
    pub structure_rows: Vec<f64>,
}

/// `α‖X − X̂‖ + (1 − α)‖A − Â‖` with per-node row decomposition.
pub fn ae_loss(
    g: &AttributedGraph,
    x_hat: &Matrix,
    a_hat: Option<&Matrix>,
    alpha: f64,
    squared: bool,
) -> Result<AeLoss> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    g.features().check_same_shape(x_hat, "ae_loss")?;
    let n = g.num_nodes();
    let feature_rows = g.features().sub(x_hat).row_norms();
    let structure_rows = if alpha < 1.0 {
        let a_hat = a_hat.ok_or_else(|| {
            Error::InvalidArgument("structure reconstruction required when alpha < 1".into())
        })?;
        if a_hat.shape() != (n, n) {
            return Err(Error::shape("ae_loss", format!("({n}, {n})"), format!("{:?}", a_hat.shape())));
        }
        g.dense_adjacency().sub(a_hat).row_norms()
    } else {
        vec![0.0; n]
    };
    Ok(combine_rows(feature_rows, structure_rows, alpha, squared))
}

fn combine_rows(
    feature_rows: Vec<f64>,
    structure_rows: Vec<f64>,
    alpha: f64,
    squared: bool,
) -> AeLoss {
    let sq = |rows: &[f64]| rows.iter().map(|r| r * r).sum::<f64>();
    let (feature_term, structure_term) = if squared {
        (sq(&feature_rows), sq(&structure_rows))
    } else {
        (sq(&feature_rows).sqrt(), sq(&structure_rows).sqrt())
    };
    let per_node = feature_rows
        .iter()
        .zip(&structure_rows)
        .map(|(f, s)| {
            if squared {
                alpha * f * f + (1.0 - alpha) * s * s
            } else {
                alpha * f + (1.0 - alpha) * s
            }
        })
        .collect();
    let structure_part = if alpha < 1.0 { (1.0 - alpha) * structure_term } else { 0.0 };
    AeLoss {
        total: alpha * feature_term + structure_part,
        per_node,
        feature_term,
        structure_term,
        feature_rows,
        structure_rows,
    }
}

/// Dropout masks for one training step: after the first encoder layer and
/// after the first feature-decoder layer.
#[derive(Debug, Clone)]
pub struct AeMasks {
    pub encoder: Matrix,
    pub decoder: Matrix,
}

impl AeMasks {
    pub fn ones(n: usize, hidden: usize) -> Self {
        AeMasks {
            encoder: Matrix::filled(n, hidden, 1.0),
            decoder: Matrix::filled(n, hidden, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAutoencoder {
    in_dim: usize,
    hidden: usize,
    latent: usize,
    alpha: f64,
    squared: bool,
    dropout: f64,
    params: ParamStore,
}

fn w(layer: &str) -> String {
    format!("{layer}.w")
}

fn b(layer: &str) -> String {
    format!("{layer}.b")
}

impl GraphAutoencoder {
    pub fn new(in_dim: usize, cfg: &AeConfig) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamStore::new(cfg.seed);
        let hidden = cfg.hidden();
        let k = cfg.latent_dim;
        let mut layers = vec![
            (ENC1, in_dim, hidden),
            (ENC2, hidden, k),
            (DEC1, k, hidden),
            (DEC2, hidden, in_dim),
        ];
        if cfg.alpha < 1.0 {
            layers.push((STRUCT, k, k));
        }
        for (name, fan_in, fan_out) in layers {
            params.insert_glorot(w(name), fan_in, fan_out, &mut rng);
            params.insert(b(name), Matrix::zeros(1, fan_out));
        }
        Ok(GraphAutoencoder {
            in_dim,
            hidden,
            latent: k,
            alpha: cfg.alpha,
            squared: cfg.squared_norm,
            dropout: cfg.dropout,
            params,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn squared_norm(&self) -> bool {
        self.squared
    }

    pub fn has_structure_decoder(&self) -> bool {
        self.alpha < 1.0
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn layer(
        &self,
        name: &str,
        adj: &NormalizedAdjacency,
        h: &Matrix,
    ) -> Result<Matrix> {
        gcn_layer(
            adj,
            h,
            self.params.value(&w(name)),
            Some(self.params.value(&b(name)).as_slice()),
        )
    }

    fn check_graph(&self, g: &AttributedGraph, adj: &NormalizedAdjacency) -> Result<()> {
        if g.feature_dim() != self.in_dim {
            return Err(Error::shape("encode", format!("{} features", self.in_dim), g.feature_dim()));
        }
        if adj.n() != g.num_nodes() {
            return Err(Error::shape("encode", format!("{} nodes", g.num_nodes()), adj.n()));
        }
        Ok(())
    }

    /// Evaluation-mode encoding (no dropout).
    pub fn encode(&self, g: &AttributedGraph, adj: &NormalizedAdjacency) -> Result<LatentEmbedding> {
        self.check_graph(g, adj)?;
        let h1 = Activation::Relu.apply(&self.layer(ENC1, adj, g.features())?);
        let z = self.layer(ENC2, adj, &h1)?;
        Ok(LatentEmbedding {
            z,
            provenance: format!("ae(seed={}, k={})", self.params.seed(), self.latent),
        })
    }

    pub fn decode_features(&self, z: &Matrix, adj: &NormalizedAdjacency) -> Result<Matrix> {
        self.check_latent(z, adj)?;
        let h = Activation::Relu.apply(&self.layer(DEC1, adj, z)?);
        self.layer(DEC2, adj, &h)
    }

    /// `z_s = GCN_s(z)`; `None` when `α = 1`.
    pub fn structure_embedding(&self, z: &Matrix, adj: &NormalizedAdjacency) -> Result<Option<Matrix>> {
        self.check_latent(z, adj)?;
        if !self.has_structure_decoder() {
            return Ok(None);
        }
        self.layer(STRUCT, adj, z).map(Some)
    }

    fn check_latent(&self, z: &Matrix, adj: &NormalizedAdjacency) -> Result<()> {
        if z.cols() != self.latent || z.rows() != adj.n() {
            return Err(Error::shape(
                "decode",
                format!("({}, {})", adj.n(), self.latent),
                format!("{:?}", z.shape()),
            ));
        }
        Ok(())
    }

    /// Feature and (dense) structure reconstruction, `Â = z_s z_sᵀ`.
    pub fn decode(&self, z: &Matrix, adj: &NormalizedAdjacency) -> Result<Reconstruction> {
        let features = self.decode_features(z, adj)?;
        let adjacency = self.structure_embedding(z, adj)?.map(|zs| zs.matmul_t(&zs));
        Ok(Reconstruction { features, adjacency })
    }

    /// Per-node reconstruction error of `g` from latent `z`, computed row by
    /// row so the `n × n` reconstruction is never held in memory.
    pub fn node_scores(
        &self,
        g: &AttributedGraph,
        adj: &NormalizedAdjacency,
        z: &Matrix,
    ) -> Result<Vec<f64>> {
        let x_hat = self.decode_features(z, adj)?;
        let feature_rows = g.features().sub(&x_hat).row_norms();
        let structure_rows = match self.structure_embedding(z, adj)? {
            Some(zs) => structure_row_errors(g, &zs),
            None => vec![0.0; g.num_nodes()],
        };
        Ok(combine_rows(feature_rows, structure_rows, self.alpha, self.squared).per_node)
    }

    /// Loss and exact gradients for one full-batch step with fixed masks.
    pub fn loss_and_gradients(
        &self,
        g: &AttributedGraph,
        adj: &NormalizedAdjacency,
        masks: &AeMasks,
    ) -> Result<(AeLoss, Gradients)> {
        self.check_graph(g, adj)?;
        let x = g.features();
        let n = g.num_nodes();
        let mut grads = Gradients::new();

        let p1 = self.layer(ENC1, adj, x)?;
        let h1 = Activation::Relu.apply(&p1).hadamard(&masks.encoder);
        let z = self.layer(ENC2, adj, &h1)?;
        let p3 = self.layer(DEC1, adj, &z)?;
        let h3 = Activation::Relu.apply(&p3).hadamard(&masks.decoder);
        let x_hat = self.layer(DEC2, adj, &h3)?;

        let rx = x_hat.sub(x);
        let feature_rows = rx.row_norms();
        let fx = rx.frobenius_norm();
        let dx_hat = if self.squared {
            rx.scale(2.0 * self.alpha)
        } else if fx > 0.0 {
            rx.scale(self.alpha / fx)
        } else {
            Matrix::zeros(n, self.in_dim)
        };

        let (dh3, dw, db) = gcn_backward(adj, &h3, self.params.value(&w(DEC2)), &dx_hat);
        grads.insert(w(DEC2), dw);
        grads.insert(b(DEC2), Matrix::row_vector(&db));
        let dp3 = Activation::Relu.backward(&p3, &dh3.hadamard(&masks.decoder));
        let (mut dz, dw, db) = gcn_backward(adj, &z, self.params.value(&w(DEC1)), &dp3);
        grads.insert(w(DEC1), dw);
        grads.insert(b(DEC1), Matrix::row_vector(&db));

        let structure_rows = if self.has_structure_decoder() {
            let zs = self.layer(STRUCT, adj, &z)?;
            // residual Â − A, reused in place for the gradient
            let mut resid = zs.matmul_t(&zs);
            for &(u, v) in g.edges() {
                resid.set(u, v, resid.get(u, v) - 1.0);
                resid.set(v, u, resid.get(v, u) - 1.0);
            }
            let rows = resid.row_norms();
            let fa = resid.frobenius_norm();
            let coef = if self.squared {
                2.0 * (1.0 - self.alpha)
            } else if fa > 0.0 {
                (1.0 - self.alpha) / fa
            } else {
                0.0
            };
            // d/dZs of ⟨G, Zs Zsᵀ⟩ = (G + Gᵀ) Zs, and G is symmetric
            let dzs = resid.matmul(&zs).scale(2.0 * coef);
            let (dz_s, dw, db) = gcn_backward(adj, &z, self.params.value(&w(STRUCT)), &dzs);
            grads.insert(w(STRUCT), dw);
            grads.insert(b(STRUCT), Matrix::row_vector(&db));
            dz.add_assign(&dz_s);
            rows
        } else {
            vec![0.0; n]
        };

        let (dh1, dw, db) = gcn_backward(adj, &h1, self.params.value(&w(ENC2)), &dz);
        grads.insert(w(ENC2), dw);
        grads.insert(b(ENC2), Matrix::row_vector(&db));
        let dp1 = Activation::Relu.backward(&p1, &dh1.hadamard(&masks.encoder));
        let (_, dw, db) = gcn_backward(adj, x, self.params.value(&w(ENC1)), &dp1);
        grads.insert(w(ENC1), dw);
        grads.insert(b(ENC1), Matrix::row_vector(&db));

        let loss = combine_rows(feature_rows, structure_rows, self.alpha, self.squared);
        Ok((loss, grads))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.params.clone());
        ck.set_hyper("model", "graph_autoencoder");
        ck.set_hyper("ae.in_dim", self.in_dim);
        ck.set_hyper("ae.hidden_dim", self.hidden);
        ck.set_hyper("ae.latent_dim", self.latent);
        ck.set_hyper("ae.alpha", self.alpha);
        ck.set_hyper("ae.squared_norm", self.squared);
        ck.set_hyper("ae.dropout", self.dropout);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model: String = ck.hyper("model")?;
        if model != "graph_autoencoder" {
            return Err(Error::Checkpoint(format!("expected graph_autoencoder, found {model}")));
        }
        let ae = GraphAutoencoder {
            in_dim: ck.hyper("ae.in_dim")?,
            hidden: ck.hyper("ae.hidden_dim")?,
            latent: ck.hyper("ae.latent_dim")?,
            alpha: ck.hyper("ae.alpha")?,
            squared: ck.hyper("ae.squared_norm")?,
            dropout: ck.hyper("ae.dropout")?,
            params: ck.params.clone(),
        };
        let mut names = vec![ENC1, ENC2, DEC1, DEC2];
        if ae.has_structure_decoder() {
            names.push(STRUCT);
        }
        for name in names {
            ae.params.try_value(&w(name))?;
            ae.params.try_value(&b(name))?;
        }
        Ok(ae)
    }
}

/// `‖a_v − (z_s z_sᵀ)_v‖` for every node, one row at a time.
pub fn structure_row_errors(g: &AttributedGraph, zs: &Matrix) -> Vec<f64> {
    let n = g.num_nodes();
    par::map_indices(n, |v| {
        let zv = zs.row(v);
        let neighbors = g.neighbors(v);
        let mut next = 0;
        let mut acc = 0.0;
        for u in 0..n {
            let mut r = dot(zv, zs.row(u));
            if next < neighbors.len() && neighbors[next] == u {
                r -= 1.0;
                next += 1;
            }
            acc += r * r;
        }
        acc.sqrt()
    })
}

/// Result of [`train_ae`].
#[derive(Debug, Clone)]
pub struct TrainedAe {
    pub model: GraphAutoencoder,
    pub embedding: LatentEmbedding,
    pub loss_history: Vec<f64>,
}

/// Full-batch Adam on the reconstruction loss for `cfg.epochs` epochs.
pub fn train_ae(g: &AttributedGraph, adj: &NormalizedAdjacency, cfg: &AeConfig) -> Result<TrainedAe> {
    let mut model = GraphAutoencoder::new(g.feature_dim(), cfg)?;
    // distinct stream from the initialiser
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let adam = AdamConfig::with_lr(cfg.lr);
    let n = g.num_nodes();
    let hidden = model.hidden;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let masks = AeMasks {
            encoder: dropout_mask(n, hidden, cfg.dropout, &mut rng, true)?,
            decoder: dropout_mask(n, hidden, cfg.dropout, &mut rng, true)?,
        };
        let (loss, grads) = model.loss_and_gradients(g, adj, &masks)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite {
                context: format!("autoencoder loss at epoch {}", epoch + 1),
            });
        }
        log::debug!("ae epoch {:>4} loss {:.6}", epoch + 1, loss.total);
        history.push(loss.total);
        adam_step(&mut model.params, &grads, &adam)?;
    }
    let embedding = model.encode(g, adj)?;
    if !embedding.z.is_finite() {
        return Err(Error::NonFinite {
            context: "latent embedding".into(),
        });
    }
    Ok(TrainedAe {
        model,
        embedding,
        loss_history: history,
    })
}
