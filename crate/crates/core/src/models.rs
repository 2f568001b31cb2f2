//! Generator, shared feature extractor, projection discriminator head and
//! classifier head.
//!
//! The discriminator and classifier read the same backbone features:
//! `D(x, y) = ψ(φ(x)) + yᵀ V φ(x)` and `C(x) = softmax(W φ(x) + b)`. Both
//! live in the discriminator parameter store and are optimised together.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{softmax_rows, Activation, Init, Linear, Mlp, MlpTrace, ParamId, ParamStore, ShapeError};
use crate::{Scalar, SoftLabel};

/// Network widths and nonlinearities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub data_dim: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub gen_embed_dim: usize,
    pub backbone_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub leaky_slope: f64,
}

impl ArchConfig {
    /// Two hidden layers of 64 in both networks and 32 features.
    pub fn desk(data_dim: usize, num_classes: usize, latent_dim: usize) -> Self {
        Self {
            data_dim,
            num_classes,
            latent_dim,
            gen_hidden: vec![64, 64],
            gen_embed_dim: 32,
            backbone_hidden: vec![64, 64],
            feature_dim: 32,
            leaky_slope: 0.2,
        }
    }
}

fn check_cols<T>(op: &'static str, m: &Array2<T>, cols: usize) -> Result<(), ShapeError> {
    if m.ncols() != cols {
        return Err(ShapeError::mismatch(op, (m.nrows(), cols), m.dim()));
    }
    Ok(())
}

fn check_rows<T>(op: &'static str, m: &Array2<T>, rows: usize) -> Result<(), ShapeError> {
    if m.nrows() != rows {
        return Err(ShapeError::mismatch(op, (rows, m.ncols()), m.dim()));
    }
    Ok(())
}

/// `G(z, y)`: the label enters through a linear embedding, so soft labels
/// mix the class embeddings by their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub embed: ParamId,
    pub trunk: Mlp,
    pub latent_dim: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratorTrace<T> {
    labels: Array2<T>,
    trunk: MlpTrace<T>,
}

impl Generator {
    fn new<T: Scalar>(store: &mut ParamStore<T>, arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let embed = Linear::new(
            store,
            "gen.embed",
            arch.num_classes,
            arch.gen_embed_dim,
            Init::Orthogonal { gain: 1.0 },
            false,
            rng,
        )
        .weight;
        let mut dims = vec![arch.latent_dim + arch.gen_embed_dim];
        dims.extend(&arch.gen_hidden);
        dims.push(arch.data_dim);
        let trunk = Mlp::new(
            store,
            "gen.trunk",
            &dims,
            Activation::Relu,
            Activation::Identity,
            Init::Orthogonal { gain: 1.0 },
            rng,
        );
        Self {
            embed,
            trunk,
            latent_dim: arch.latent_dim,
            num_classes: arch.num_classes,
        }
    }

    fn trunk_input<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z: &Array2<T>,
        y: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        check_cols("generator latent", z, self.latent_dim)?;
        check_cols("generator label", y, self.num_classes)?;
        check_rows("generator label", y, z.nrows())?;
        let emb = y.dot(store.value(self.embed));
        Ok(ndarray::concatenate(Axis(1), &[z.view(), emb.view()]).expect("row counts checked"))
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z: &Array2<T>,
        y: &Array2<T>,
    ) -> Result<(Array2<T>, GeneratorTrace<T>), ShapeError> {
        let input = self.trunk_input(store, z, y)?;
        let (out, trunk) = self.trunk.forward(store, &input)?;
        Ok((
            out,
            GeneratorTrace {
                labels: y.clone(),
                trunk,
            },
        ))
    }

    pub fn generate<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z: &Array2<T>,
        y: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        let input = self.trunk_input(store, z, y)?;
        self.trunk.apply(store, &input)
    }

    /// Returns the gradients with respect to `z` and `y`.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        trace: &GeneratorTrace<T>,
        grad_out: &Array2<T>,
    ) -> Result<(Array2<T>, Array2<T>), ShapeError> {
        let g_in = self.trunk.backward(store, &trace.trunk, grad_out)?;
        let g_z = g_in.slice(s![.., ..self.latent_dim]).to_owned();
        let g_emb = g_in.slice(s![.., self.latent_dim..]).to_owned();
        let d_embed = trace.labels.t().dot(&g_emb);
        store.accumulate(self.embed, &d_embed);
        let g_y = g_emb.dot(&store.value(self.embed).t());
        Ok((g_z, g_y))
    }
}

/// Feature extractor `φ` shared by the adversarial and classifier heads.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBackbone {
    pub mlp: Mlp,
}

impl SharedBackbone {
    fn new<T: Scalar>(store: &mut ParamStore<T>, arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![arch.data_dim];
        dims.extend(&arch.backbone_hidden);
        dims.push(arch.feature_dim);
        let act = Activation::LeakyRelu(arch.leaky_slope);
        Self {
            mlp: Mlp::new(store, "backbone", &dims, act, act, Init::Orthogonal { gain: 1.0 }, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
    ) -> Result<(Array2<T>, MlpTrace<T>), ShapeError> {
        self.mlp.forward(store, x)
    }

    pub fn features<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        self.mlp.apply(store, x)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        trace: &MlpTrace<T>,
        grad_feats: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        self.mlp.backward(store, trace, grad_feats)
    }
}

/// `ψ(f) + yᵀ V f`, affine in the label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub psi: Linear,
    /// Stored as `h × K` so that `f · proj` gives per-class projections.
    pub proj: ParamId,
    pub num_classes: usize,
}

impl ProjectionHead {
    fn new<T: Scalar>(store: &mut ParamStore<T>, arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let psi = Linear::new(
            store,
            "adv.psi",
            arch.feature_dim,
            1,
            Init::Orthogonal { gain: 1.0 },
            true,
            rng,
        );
        let proj = Linear::new(
            store,
            "adv.proj",
            arch.feature_dim,
            arch.num_classes,
            Init::Orthogonal { gain: 1.0 },
            false,
            rng,
        )
        .weight;
        Self {
            psi,
            proj,
            num_classes: arch.num_classes,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        feats: &Array2<T>,
        y: &Array2<T>,
    ) -> Result<Array1<T>, ShapeError> {
        check_cols("projection label", y, self.num_classes)?;
        check_rows("projection label", y, feats.nrows())?;
        let uncond = self.psi.forward(store, feats)?.column(0).to_owned();
        let per_class = feats.dot(store.value(self.proj));
        Ok(uncond + (per_class * y).sum_axis(Axis(1)))
    }

    /// Accumulates head gradients and returns the feature gradient.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        feats: &Array2<T>,
        y: &Array2<T>,
        grad_scores: &Array1<T>,
    ) -> Result<Array2<T>, ShapeError> {
        if grad_scores.len() != feats.nrows() {
            return Err(ShapeError::mismatch(
                "projection backward",
                (feats.nrows(), 1),
                (grad_scores.len(), 1),
            ));
        }
        let g = grad_scores.view().insert_axis(Axis(1)).to_owned();
        let mut g_feats = self.psi.backward(store, feats, &g)?;
        let weighted = y * &g;
        store.accumulate(self.proj, &feats.t().dot(&weighted));
        g_feats += &weighted.dot(&store.value(self.proj).t());
        Ok(g_feats)
    }
}

/// Linear layer to `K` logits; softmax is applied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub linear: Linear,
}

impl ClassifierHead {
    fn new<T: Scalar>(store: &mut ParamStore<T>, arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear: Linear::new(store, "cls", arch.feature_dim, arch.num_classes, Init::Zeros, true, rng),
        }
    }

    pub fn logits<T: Scalar>(&self, store: &ParamStore<T>, feats: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        self.linear.forward(store, feats)
    }

    pub fn probs<T: Scalar>(&self, store: &ParamStore<T>, feats: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        Ok(softmax_rows(&self.logits(store, feats)?))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        feats: &Array2<T>,
        grad_logits: &Array2<T>,
    ) -> Result<Array2<T>, ShapeError> {
        self.linear.backward(store, feats, grad_logits)
    }
}

/// Every network plus the two parameter stores: generator parameters in
/// `gen`, backbone and both heads in `disc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet<T> {
    pub arch: ArchConfig,
    pub gen: ParamStore<T>,
    pub disc: ParamStore<T>,
    pub generator: Generator,
    pub backbone: SharedBackbone,
    pub adv_head: ProjectionHead,
    pub cls_head: ClassifierHead,
}

impl<T: Scalar> ModelSet<T> {
    pub fn new(arch: ArchConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x6d6f64656c);
        let mut gen = ParamStore::new();
        let mut disc = ParamStore::new();
        let generator = Generator::new(&mut gen, &arch, &mut rng);
        let backbone = SharedBackbone::new(&mut disc, &arch, &mut rng);
        let adv_head = ProjectionHead::new(&mut disc, &arch, &mut rng);
        let cls_head = ClassifierHead::new(&mut disc, &arch, &mut rng);
        Self {
            arch,
            gen,
            disc,
            generator,
            backbone,
            adv_head,
            cls_head,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn generate(&self, z: &Array2<T>, y: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        self.generator.generate(&self.gen, z, y)
    }

    /// Generates one sample from a latent vector and a soft label.
    pub fn generate_one(&self, z: &Array1<T>, y: &SoftLabel<T>) -> Result<Array1<T>, ShapeError> {
        let z = z.view().insert_axis(Axis(0)).to_owned();
        let y = y.values().view().insert_axis(Axis(0)).to_owned();
        Ok(self.generate(&z, &y)?.row(0).to_owned())
    }

    pub fn d_score(&self, x: &Array2<T>, y: &Array2<T>) -> Result<Array1<T>, ShapeError> {
        let f = self.backbone.features(&self.disc, x)?;
        self.adv_head.forward(&self.disc, &f, y)
    }

    pub fn d_score_one(&self, x: &Array1<T>, y: &SoftLabel<T>) -> Result<T, ShapeError> {
        let x = x.view().insert_axis(Axis(0)).to_owned();
        let y = y.values().view().insert_axis(Axis(0)).to_owned();
        Ok(self.d_score(&x, &y)?[0])
    }

    /// Classifier softmax outputs, one row per sample.
    pub fn classify(&self, x: &Array2<T>) -> Result<Array2<T>, ShapeError> {
        let f = self.backbone.features(&self.disc, x)?;
        self.cls_head.probs(&self.disc, &f)
    }

    pub fn classify_one(&self, x: &Array1<T>) -> Result<SoftLabel<T>, ShapeError> {
        let x = x.view().insert_axis(Axis(0)).to_owned();
        let p = self.classify(&x)?.row(0).to_owned();
        Ok(SoftLabel::new(p).expect("softmax output lies on the simplex"))
    }

    /// Gradient of `Σ_i w_i D(x_i, y_i)` with respect to `x`; accumulates
    /// discriminator gradients unless `disc` is frozen.
    pub fn d_score_backward(
        &mut self,
        x: &Array2<T>,
        y: &Array2<T>,
        weights: &Array1<T>,
    ) -> Result<Array2<T>, ShapeError> {
        let (f, trace) = self.backbone.forward(&self.disc, x)?;
        let gf = self.adv_head.backward(&mut self.disc, &f, y, weights)?;
        self.backbone.backward(&mut self.disc, &trace, &gf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradients, check_input_gradient, GradCheckOptions};
    use crate::one_hot_rows;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    fn random_simplex(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut m = Array2::from_shape_fn((rows, k), |_| rng.random::<f64>() + 1e-3);
        for mut r in m.rows_mut() {
            let s = r.sum();
            r.mapv_inplace(|v| v / s);
        }
        m
    }

    fn small() -> ModelSet<f64> {
        let arch = ArchConfig {
            gen_hidden: vec![8, 8],
            gen_embed_dim: 4,
            backbone_hidden: vec![8, 8],
            feature_dim: 5,
            ..ArchConfig::desk(2, 4, 3)
        };
        let mut m = ModelSet::new(arch, 7);
        // Break the exactly-uniform classifier so its gradients are generic.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for p in m.disc.iter_mut() {
            if p.name.starts_with("cls") {
                p.value.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal) * 0.3);
            }
        }
        m
    }

    #[test]
    fn generation_is_deterministic_and_linear_in_label_embedding() {
        let m = ModelSet::<f64>::new(ArchConfig::desk(2, 4, 3), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = randn(1, 3, &mut rng).row(0).to_owned();
        let y = SoftLabel::from_slice(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(m.generate_one(&z, &y).unwrap(), m.generate_one(&z, &y).unwrap());

        // Trunk input uses the label-weighted mix of class embeddings.
        let zb = z.view().insert_axis(Axis(0)).to_owned();
        let yb = y.values().view().insert_axis(Axis(0)).to_owned();
        let input = m.generator.trunk_input(&m.gen, &zb, &yb).unwrap();
        let e = m.gen.value(m.generator.embed);
        let mut mix = Array1::<f64>::zeros(e.ncols());
        for k in 0..4 {
            mix.scaled_add(y.values()[k], &e.row(k));
        }
        let got = input.slice(s![0, 3..]).to_owned();
        assert!((&got - &mix).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fresh_classifier_is_uniform() {
        let m = ModelSet::<f64>::new(ArchConfig::desk(2, 5, 3), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = m.classify(&randn(10, 2, &mut rng)).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn classifier_outputs_on_open_simplex() {
        let m = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = m.classify(&(randn(50, 2, &mut rng) * 4.0)).unwrap();
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn projection_score_is_affine_in_label() {
        let m = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = randn(20, 2, &mut rng);
        let y1 = random_simplex(20, 4, &mut rng);
        let y2 = random_simplex(20, 4, &mut rng);
        for &a in &[0.0, 0.3, 0.5, 1.0] {
            let mix = &y1 * a + &y2 * (1.0 - a);
            let lhs = m.d_score(&x, &mix).unwrap();
            let rhs = m.d_score(&x, &y1).unwrap() * a + m.d_score(&x, &y2).unwrap() * (1.0 - a);
            assert!((&lhs - &rhs).iter().all(|v| v.abs() < 1e-10));
        }
        // Uniform label: ψ(φ(x)) + mean over rows of Vφ(x).
        let f = m.backbone.features(&m.disc, &x).unwrap();
        let psi = m.adv_head.psi.forward(&m.disc, &f).unwrap();
        let per_class = f.dot(m.disc.value(m.adv_head.proj));
        let expect = psi.column(0).to_owned() + per_class.mean_axis(Axis(1)).unwrap();
        let uni = Array2::from_elem((20, 4), 0.25);
        let got = m.d_score(&x, &uni).unwrap();
        assert!((&got - &expect).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn d_score_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let mut m = small();
            let x = randn(5, 2, &mut rng);
            let y = random_simplex(5, 4, &mut rng);
            let w = Array1::from_shape_fn(5, |_| rng.random::<f64>() - 0.5);
            m.disc.zero_grad();
            let gx = m.d_score_backward(&x, &y, &w).unwrap();
            let mm = m.clone();
            let rep = check_input_gradient(
                "x",
                &x,
                &gx,
                |x| mm.d_score(x, &y).unwrap().dot(&w),
                &GradCheckOptions::default(),
            );
            assert!(rep.max_rel_err < 1e-4, "{rep:?}");
            let (bb, head) = (m.backbone.clone(), m.adv_head.clone());
            let report = check_gradients(
                &mut m.disc,
                |s| head.forward(s, &bb.features(s, &x).unwrap(), &y).unwrap().dot(&w),
                &GradCheckOptions::default(),
            );
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn generator_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut m = small();
            let z = randn(4, 3, &mut rng);
            let y = random_simplex(4, 4, &mut rng);
            let probe = randn(4, 2, &mut rng);
            let (_, trace) = m.generator.forward(&m.gen, &z, &y).unwrap();
            m.gen.zero_grad();
            let (gz, gy) = m.generator.backward(&mut m.gen, &trace, &probe).unwrap();
            let g = m.generator.clone();
            let report = check_gradients(
                &mut m.gen,
                |s| (g.generate(s, &z, &y).unwrap() * &probe).sum(),
                &GradCheckOptions::default(),
            );
            assert!(report.passed(), "{report:?}");
            let rep = check_input_gradient(
                "z",
                &z,
                &gz,
                |z| (g.generate(&m.gen, z, &y).unwrap() * &probe).sum(),
                &GradCheckOptions::default(),
            );
            assert!(rep.max_rel_err < 1e-4, "{rep:?}");
            let rep = check_input_gradient(
                "y",
                &y,
                &gy,
                |y| (g.generate(&m.gen, &z, y).unwrap() * &probe).sum(),
                &GradCheckOptions::default(),
            );
            assert!(rep.max_rel_err < 1e-4, "{rep:?}");
        }
    }

    #[test]
    fn shared_backbone_accumulates_both_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut m = small();
        let x = randn(6, 2, &mut rng);
        let y = one_hot_rows::<f64>(&[0, 1, 2, 3, 0, 1], 4);
        let w = Array1::from_shape_fn(6, |_| rng.random::<f64>());
        let gl = randn(6, 4, &mut rng);

        let run = |m: &mut ModelSet<f64>, adv: bool, cls: bool| {
            m.disc.zero_grad();
            let (f, trace) = m.backbone.forward(&m.disc, &x).unwrap();
            let mut gf = Array2::zeros(f.raw_dim());
            if adv {
                gf += &m.adv_head.backward(&mut m.disc, &f, &y, &w).unwrap();
            }
            if cls {
                gf += &m.cls_head.backward(&mut m.disc, &f, &gl).unwrap();
            }
            m.backbone.backward(&mut m.disc, &trace, &gf).unwrap();
            m.disc.clone()
        };
        let both = run(&mut m, true, true);
        let adv = run(&mut m, true, false);
        let cls = run(&mut m, false, true);
        for ((b, a), c) in both.iter().zip(adv.iter()).zip(cls.iter()) {
            let sum = &a.grad + &c.grad;
            assert!((&b.grad - &sum).iter().all(|v| v.abs() < 1e-10), "{}", b.name);
        }
    }

    #[test]
    fn shape_errors_surface() {
        let m = small();
        let x = Array2::<f64>::zeros((3, 5));
        assert!(m.classify(&x).is_err());
        let x = Array2::<f64>::zeros((3, 2));
        assert!(m.d_score(&x, &Array2::zeros((3, 3))).is_err());
        assert!(m.generate(&Array2::zeros((2, 3)), &Array2::zeros((3, 4))).is_err());
    }

    #[test]
    fn single_precision_model() {
        let m = ModelSet::<f32>::new(ArchConfig::desk(2, 3, 4), 0);
        let z = Array2::<f32>::ones((2, 4));
        let y = one_hot_rows::<f32>(&[0, 2], 3);
        let x = m.generate(&z, &y).unwrap();
        assert_eq!(x.dim(), (2, 2));
        assert!(m.d_score(&x, &y).unwrap().iter().all(|v| v.is_finite()));
    }
}
