//! A small 1-D residual network for I/Q classification.
//!
//! Topology: a strided stem convolution, then `num_conv_blocks` residual
//! convolution blocks with a stride-2 downsampling block between
//! successive blocks, then global average pooling and a softmax head.
//! Size-3 convolutions are separable (depthwise then pointwise); every
//! convolution is followed by batch norm and ReLU. Downsampling blocks
//! put the stride on the main path and average-pool-then-1x1 on the
//! shortcut.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    avgpool2_backward, avgpool2_forward, bn_backward, bn_forward_infer, bn_forward_train,
    conv1d_backward, conv1d_forward, conv_out_len, dense_backward, dense_forward, depthwise_backward,
    depthwise_forward, gap_backward, gap_forward, pointwise_backward, pointwise_forward, relu,
    relu_backward, BnCache,
};
use crate::nn::loss::{ce_softmax_dlogits, softmax};
use crate::nn::params::{Gradients, Init, Layout, ParamKind, Parameters, TensorId};
use crate::nn::scalar::Scalar;

/// Separable convolutions are fixed at kernel size 3.
const DW_KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Residual convolution blocks; a downsampling block is inserted
    /// before each block after the first.
    pub num_conv_blocks: usize,
    pub stem_kernels: usize,
    pub stem_size: usize,
    pub stem_stride: usize,
    /// Channel width of the first block; doubles at each downsampling
    /// block. Must equal `stem_kernels`.
    pub base_channels: usize,
    pub num_classes: usize,
    pub input_len: usize,
    pub input_channels: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_conv_blocks: 2,
            stem_kernels: 64,
            stem_size: 7,
            stem_stride: 2,
            base_channels: 64,
            num_classes: 10,
            input_len: 1024,
            input_channels: 2,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_conv_blocks < 1 {
            return Err(Error::config("num_conv_blocks must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.stem_kernels == 0 || self.stem_size == 0 || self.stem_stride == 0 {
            return Err(Error::config("stem parameters must be positive"));
        }
        if self.base_channels != self.stem_kernels {
            return Err(Error::config(
                "base_channels must equal stem_kernels (the first block sits on the stem output)",
            ));
        }
        if self.input_channels == 0 || self.input_len < self.stem_size {
            return Err(Error::config("input too short for the stem kernel"));
        }
        let mut len = conv_out_len(
            self.input_len,
            self.stem_size,
            self.stem_stride,
            self.stem_size / 2,
        );
        for _ in 1..self.num_conv_blocks {
            if len % 2 != 0 || len < 2 {
                return Err(Error::config(format!(
                    "input_len {} cannot be halved {} times after the stem",
                    self.input_len,
                    self.num_conv_blocks - 1
                )));
            }
            len /= 2;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct BnIds {
    gamma: TensorId,
    beta: TensorId,
    mean: TensorId,
    var: TensorId,
}

fn declare_bn(layout: &mut Layout, prefix: &str, ch: usize) -> BnIds {
    BnIds {
        gamma: layout.push(format!("{prefix}.gamma"), &[ch], ParamKind::Trainable, Init::Ones),
        beta: layout.push(format!("{prefix}.beta"), &[ch], ParamKind::Trainable, Init::Zeros),
        mean: layout.push(
            format!("{prefix}.running_mean"),
            &[ch],
            ParamKind::RunningStat,
            Init::Zeros,
        ),
        var: layout.push(
            format!("{prefix}.running_var"),
            &[ch],
            ParamKind::RunningStat,
            Init::Ones,
        ),
    }
}

#[derive(Debug, Clone, Copy)]
struct SepConv {
    dw: TensorId,
    pw: TensorId,
    bn: BnIds,
    stride: usize,
}

fn declare_sep_conv(
    layout: &mut Layout,
    prefix: &str,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
) -> SepConv {
    SepConv {
        dw: layout.push(
            format!("{prefix}.dw"),
            &[in_ch, DW_KERNEL],
            ParamKind::Trainable,
            Init::HeNormal { fan_in: DW_KERNEL },
        ),
        pw: layout.push(
            format!("{prefix}.pw"),
            &[out_ch, in_ch],
            ParamKind::Trainable,
            Init::HeNormal { fan_in: in_ch },
        ),
        bn: declare_bn(layout, &format!("{prefix}.bn"), out_ch),
        stride,
    }
}

#[derive(Debug, Clone, Copy)]
struct Stem {
    w: TensorId,
    bn: BnIds,
}

#[derive(Debug, Clone, Copy)]
struct ConvBlock {
    conv1: SepConv,
    conv2: SepConv,
}

#[derive(Debug, Clone, Copy)]
struct DownBlock {
    conv1: SepConv,
    conv2: SepConv,
    sc_pw: TensorId,
    sc_bn: BnIds,
}

#[derive(Debug, Clone)]
struct Stage {
    down: Option<DownBlock>,
    block: ConvBlock,
}

#[derive(Debug, Clone, Copy)]
struct Head {
    w: TensorId,
    b: TensorId,
}

/// Model topology plus the parameter layout it induces.
#[derive(Debug, Clone)]
pub struct Resnet1d {
    config: ModelConfig,
    stem: Stem,
    stages: Vec<Stage>,
    head: Head,
    layout: Layout,
}

impl Resnet1d {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = Layout::default();
        let stem = Stem {
            w: layout.push(
                "stem.conv.w",
                &[config.stem_kernels, config.input_channels, config.stem_size],
                ParamKind::Trainable,
                Init::HeNormal {
                    fan_in: config.input_channels * config.stem_size,
                },
            ),
            bn: declare_bn(&mut layout, "stem.bn", config.stem_kernels),
        };

        let mut stages = Vec::new();
        let mut ch = config.base_channels;
        for i in 0..config.num_conv_blocks {
            let down = (i > 0).then(|| {
                let p = format!("stage{i}.down");
                let d = DownBlock {
                    conv1: declare_sep_conv(&mut layout, &format!("{p}.conv1"), ch, ch * 2, 2),
                    conv2: declare_sep_conv(&mut layout, &format!("{p}.conv2"), ch * 2, ch * 2, 1),
                    sc_pw: layout.push(
                        format!("{p}.shortcut.pw"),
                        &[ch * 2, ch],
                        ParamKind::Trainable,
                        Init::HeNormal { fan_in: ch },
                    ),
                    sc_bn: declare_bn(&mut layout, &format!("{p}.shortcut.bn"), ch * 2),
                };
                ch *= 2;
                d
            });
            let p = format!("stage{i}.block");
            let block = ConvBlock {
                conv1: declare_sep_conv(&mut layout, &format!("{p}.conv1"), ch, ch, 1),
                conv2: declare_sep_conv(&mut layout, &format!("{p}.conv2"), ch, ch, 1),
            };
            stages.push(Stage { down, block });
        }

        // The classifier head starts at zero so a fresh model emits uniform
        // probabilities; features below it are He-initialized.
        let head = Head {
            w: layout.push(
                "head.w",
                &[config.num_classes, ch],
                ParamKind::Trainable,
                Init::Zeros,
            ),
            b: layout.push("head.b", &[config.num_classes], ParamKind::Trainable, Init::Zeros),
        };

        Ok(Self {
            config,
            stem,
            stages,
            head,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Builds freshly initialized parameters for this topology.
    pub fn init_params<F: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Parameters<F> {
        self.layout.init(rng)
    }

    fn check_input<F: Scalar>(&self, x: &Array3<F>) -> Result<()> {
        let (_, ch, len) = x.dim();
        if ch != self.config.input_channels || len != self.config.input_len {
            return Err(Error::ShapeMismatch(format!(
                "expected input (batch, {}, {}), got (batch, {ch}, {len})",
                self.config.input_channels, self.config.input_len
            )));
        }
        Ok(())
    }
}

fn ensure_finite3<F: Scalar>(layer: &str, a: &Array3<F>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure { layer: layer.into() })
    }
}

fn ensure_finite2<F: Scalar>(layer: &str, a: &Array2<F>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure { layer: layer.into() })
    }
}

/// Batch statistics produced by one training-mode forward pass, to be
/// folded into the running statistics.
pub struct RunningUpdate<F> {
    mean_id: TensorId,
    var_id: TensorId,
    batch_mean: Array1<F>,
    batch_var: Array1<F>,
}

pub struct SepConvCache<F> {
    x: Array3<F>,
    dw_out: Array3<F>,
    bn: BnCache<F>,
}

pub struct StemCache<F> {
    x: Array3<F>,
    bn: BnCache<F>,
    y: Array3<F>,
}

pub struct BlockCache<F> {
    c1: SepConvCache<F>,
    h1: Array3<F>,
    c2: SepConvCache<F>,
    y: Array3<F>,
}

pub struct DownCache<F> {
    c1: SepConvCache<F>,
    h1: Array3<F>,
    c2: SepConvCache<F>,
    pooled: Array3<F>,
    sc_bn: BnCache<F>,
    y: Array3<F>,
}

/// Everything backward needs from a training-mode forward pass.
pub struct Cache<F> {
    stem: StemCache<F>,
    stages: Vec<(Option<DownCache<F>>, BlockCache<F>)>,
    gap_in_len: usize,
    feat: Array2<F>,
    probs: Array2<F>,
}

impl<F: Scalar> Cache<F> {
    pub fn probs(&self) -> &Array2<F> {
        &self.probs
    }
}

pub struct ForwardPass<F> {
    pub probs: Array2<F>,
    pub cache: Cache<F>,
    pub running_updates: Vec<RunningUpdate<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl Resnet1d {
    fn sep_forward_train<F: Scalar>(
        &self,
        params: &Parameters<F>,
        sc: &SepConv,
        x: &Array3<F>,
        updates: &mut Vec<RunningUpdate<F>>,
        name: &str,
    ) -> Result<(Array3<F>, SepConvCache<F>)> {
        let dw_out = depthwise_forward(x, &params.view2(sc.dw), sc.stride, 1);
        let pw_out = pointwise_forward(&dw_out, &params.view2(sc.pw));
        let (y, bn) = bn_forward_train(
            &pw_out,
            &params.view1(sc.bn.gamma),
            &params.view1(sc.bn.beta),
            self.config.bn_eps,
        );
        // Checked before any ReLU, which would otherwise mask NaN as zero.
        ensure_finite3(name, &y)?;
        updates.push(RunningUpdate {
            mean_id: sc.bn.mean,
            var_id: sc.bn.var,
            batch_mean: bn.batch_mean.clone(),
            batch_var: bn.batch_var.clone(),
        });
        Ok((
            y,
            SepConvCache {
                x: x.clone(),
                dw_out,
                bn,
            },
        ))
    }

    fn sep_forward_infer<F: Scalar>(
        &self,
        params: &Parameters<F>,
        sc: &SepConv,
        x: &Array3<F>,
        name: &str,
    ) -> Result<Array3<F>> {
        let dw_out = depthwise_forward(x, &params.view2(sc.dw), sc.stride, 1);
        let pw_out = pointwise_forward(&dw_out, &params.view2(sc.pw));
        let y = bn_forward_infer(
            &pw_out,
            &params.view1(sc.bn.gamma),
            &params.view1(sc.bn.beta),
            &params.view1(sc.bn.mean),
            &params.view1(sc.bn.var),
            self.config.bn_eps,
        );
        ensure_finite3(name, &y)?;
        Ok(y)
    }

    /// Training-mode forward pass returning probabilities, the cache for
    /// backward, and pending running-statistic updates.
    pub fn forward_cached<F: Scalar>(
        &self,
        params: &Parameters<F>,
        x: &Array3<F>,
    ) -> Result<ForwardPass<F>> {
        self.check_input(x)?;
        let mut updates = Vec::new();

        let pad = self.config.stem_size / 2;
        let conv = conv1d_forward(x, &params.view3(self.stem.w), self.config.stem_stride, pad);
        let (bn_out, stem_bn) = bn_forward_train(
            &conv,
            &params.view1(self.stem.bn.gamma),
            &params.view1(self.stem.bn.beta),
            self.config.bn_eps,
        );
        updates.push(RunningUpdate {
            mean_id: self.stem.bn.mean,
            var_id: self.stem.bn.var,
            batch_mean: stem_bn.batch_mean.clone(),
            batch_var: stem_bn.batch_var.clone(),
        });
        ensure_finite3("stem", &bn_out)?;
        let stem_y = relu(&bn_out);
        let stem_cache = StemCache {
            x: x.clone(),
            bn: stem_bn,
            y: stem_y,
        };

        let mut cur = stem_cache.y.clone();
        let mut stage_caches = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            let down_cache = match &stage.down {
                Some(d) => {
                    let (pre1, c1) = self.sep_forward_train(
                        params,
                        &d.conv1,
                        &cur,
                        &mut updates,
                        &format!("stage{i}.down.conv1"),
                    )?;
                    let h1 = relu(&pre1);
                    let (pre2, c2) = self.sep_forward_train(
                        params,
                        &d.conv2,
                        &h1,
                        &mut updates,
                        &format!("stage{i}.down.conv2"),
                    )?;
                    let pooled = avgpool2_forward(&cur);
                    let sc_out = pointwise_forward(&pooled, &params.view2(d.sc_pw));
                    let (sc_pre, sc_bn) = bn_forward_train(
                        &sc_out,
                        &params.view1(d.sc_bn.gamma),
                        &params.view1(d.sc_bn.beta),
                        self.config.bn_eps,
                    );
                    ensure_finite3(&format!("stage{i}.down.shortcut"), &sc_pre)?;
                    updates.push(RunningUpdate {
                        mean_id: d.sc_bn.mean,
                        var_id: d.sc_bn.var,
                        batch_mean: sc_bn.batch_mean.clone(),
                        batch_var: sc_bn.batch_var.clone(),
                    });
                    let y = relu(&(&pre2 + &sc_pre));
                    cur = y.clone();
                    Some(DownCache {
                        c1,
                        h1,
                        c2,
                        pooled,
                        sc_bn,
                        y,
                    })
                }
                None => None,
            };

            let (pre1, c1) = self.sep_forward_train(
                params,
                &stage.block.conv1,
                &cur,
                &mut updates,
                &format!("stage{i}.block.conv1"),
            )?;
            let h1 = relu(&pre1);
            let (pre2, c2) = self.sep_forward_train(
                params,
                &stage.block.conv2,
                &h1,
                &mut updates,
                &format!("stage{i}.block.conv2"),
            )?;
            let y = relu(&(&pre2 + &cur));
            cur = y.clone();
            stage_caches.push((down_cache, BlockCache { c1, h1, c2, y }));
        }

        let gap_in_len = cur.dim().2;
        let feat = gap_forward(&cur);
        let logits = dense_forward(&feat, &params.view2(self.head.w), &params.view1(self.head.b));
        let probs = softmax(&logits);
        ensure_finite2("head", &probs)?;

        Ok(ForwardPass {
            probs: probs.clone(),
            cache: Cache {
                stem: stem_cache,
                stages: stage_caches,
                gap_in_len,
                feat,
                probs,
            },
            running_updates: updates,
        })
    }

    /// Folds batch statistics into the running statistics:
    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn apply_running_updates<F: Scalar>(
        &self,
        params: &mut Parameters<F>,
        updates: &[RunningUpdate<F>],
    ) {
        let momentum = F::from_f64(self.config.bn_momentum);
        let blend = F::one() - momentum;
        for u in updates {
            let rm = params.get_mut(u.mean_id);
            for (r, &b) in rm.iter_mut().zip(u.batch_mean.iter()) {
                *r = momentum * *r + blend * b;
            }
            let rv = params.get_mut(u.var_id);
            for (r, &b) in rv.iter_mut().zip(u.batch_var.iter()) {
                *r = momentum * *r + blend * b;
            }
        }
    }

    /// Inference-mode forward pass using running statistics.
    pub fn predict<F: Scalar>(&self, params: &Parameters<F>, x: &Array3<F>) -> Result<Array2<F>> {
        self.check_input(x)?;
        let pad = self.config.stem_size / 2;
        let conv = conv1d_forward(x, &params.view3(self.stem.w), self.config.stem_stride, pad);
        let bn_out = bn_forward_infer(
            &conv,
            &params.view1(self.stem.bn.gamma),
            &params.view1(self.stem.bn.beta),
            &params.view1(self.stem.bn.mean),
            &params.view1(self.stem.bn.var),
            self.config.bn_eps,
        );
        ensure_finite3("stem", &bn_out)?;
        let mut cur = relu(&bn_out);

        for (i, stage) in self.stages.iter().enumerate() {
            if let Some(d) = &stage.down {
                let h1 = relu(&self.sep_forward_infer(
                    params,
                    &d.conv1,
                    &cur,
                    &format!("stage{i}.down.conv1"),
                )?);
                let pre2 = self.sep_forward_infer(
                    params,
                    &d.conv2,
                    &h1,
                    &format!("stage{i}.down.conv2"),
                )?;
                let pooled = avgpool2_forward(&cur);
                let sc_out = pointwise_forward(&pooled, &params.view2(d.sc_pw));
                let sc_pre = bn_forward_infer(
                    &sc_out,
                    &params.view1(d.sc_bn.gamma),
                    &params.view1(d.sc_bn.beta),
                    &params.view1(d.sc_bn.mean),
                    &params.view1(d.sc_bn.var),
                    self.config.bn_eps,
                );
                ensure_finite3(&format!("stage{i}.down.shortcut"), &sc_pre)?;
                cur = relu(&(&pre2 + &sc_pre));
            }
            let h1 = relu(&self.sep_forward_infer(
                params,
                &stage.block.conv1,
                &cur,
                &format!("stage{i}.block.conv1"),
            )?);
            let pre2 = self.sep_forward_infer(
                params,
                &stage.block.conv2,
                &h1,
                &format!("stage{i}.block.conv2"),
            )?;
            cur = relu(&(&pre2 + &cur));
        }

        let feat = gap_forward(&cur);
        let logits = dense_forward(&feat, &params.view2(self.head.w), &params.view1(self.head.b));
        let probs = softmax(&logits);
        ensure_finite2("head", &probs)?;
        Ok(probs)
    }

    /// Mode-dispatching forward; training mode folds batch statistics into
    /// the running statistics.
    pub fn forward<F: Scalar>(
        &self,
        params: &mut Parameters<F>,
        x: &Array3<F>,
        mode: Mode,
    ) -> Result<Array2<F>> {
        match mode {
            Mode::Train => {
                let pass = self.forward_cached(params, x)?;
                self.apply_running_updates(params, &pass.running_updates);
                Ok(pass.probs)
            }
            Mode::Infer => self.predict(params, x),
        }
    }

    fn sep_backward<F: Scalar>(
        &self,
        params: &Parameters<F>,
        grads: &mut Gradients<F>,
        sc: &SepConv,
        cache: &SepConvCache<F>,
        d_pre: &Array3<F>,
    ) -> Array3<F> {
        let (d_pw_out, dgamma, dbeta) = bn_backward(&cache.bn, &params.view1(sc.bn.gamma), d_pre);
        grads.accumulate(sc.bn.gamma, &dgamma);
        grads.accumulate(sc.bn.beta, &dbeta);
        let (d_dw_out, d_pw_w) = pointwise_backward(&cache.dw_out, &params.view2(sc.pw), &d_pw_out);
        grads.accumulate(sc.pw, &d_pw_w);
        let (dx, d_dw_w) = depthwise_backward(&cache.x, &params.view2(sc.dw), sc.stride, 1, &d_dw_out);
        grads.accumulate(sc.dw, &d_dw_w);
        dx
    }

    /// Gradients of the cross-entropy loss against `targets`.
    pub fn backward<F: Scalar>(
        &self,
        params: &Parameters<F>,
        cache: &Cache<F>,
        targets: &[usize],
    ) -> Gradients<F> {
        let dlogits = ce_softmax_dlogits(&cache.probs, targets);
        self.backward_from_dlogits(params, cache, &dlogits)
    }

    /// Gradients for an arbitrary upstream logit gradient (used by losses
    /// that mask or reweight examples).
    pub fn backward_from_dlogits<F: Scalar>(
        &self,
        params: &Parameters<F>,
        cache: &Cache<F>,
        dlogits: &Array2<F>,
    ) -> Gradients<F> {
        let mut grads = Gradients::zeros_like(params);

        let (dfeat, dw_head, db_head) =
            dense_backward(&cache.feat, &params.view2(self.head.w), dlogits);
        grads.accumulate(self.head.w, &dw_head);
        grads.accumulate(self.head.b, &db_head);
        let mut dy = gap_backward(&dfeat, cache.gap_in_len);

        for (stage, (down_cache, bc)) in self.stages.iter().zip(&cache.stages).rev() {
            // Identity-shortcut block.
            let dz = relu_backward(&dy, &bc.y);
            let dh1_pre = self.sep_backward(params, &mut grads, &stage.block.conv2, &bc.c2, &dz);
            let dh1 = relu_backward(&dh1_pre, &bc.h1);
            let dx_main = self.sep_backward(params, &mut grads, &stage.block.conv1, &bc.c1, &dh1);
            dy = &dx_main + &dz;

            if let (Some(d), Some(dc)) = (&stage.down, down_cache) {
                let dz = relu_backward(&dy, &dc.y);
                // Main path.
                let dh1_pre = self.sep_backward(params, &mut grads, &d.conv2, &dc.c2, &dz);
                let dh1 = relu_backward(&dh1_pre, &dc.h1);
                let dx_main = self.sep_backward(params, &mut grads, &d.conv1, &dc.c1, &dh1);
                // Shortcut branch: BN -> pointwise -> average pool.
                let (d_sc_pre, dgamma, dbeta) =
                    bn_backward(&dc.sc_bn, &params.view1(d.sc_bn.gamma), &dz);
                grads.accumulate(d.sc_bn.gamma, &dgamma);
                grads.accumulate(d.sc_bn.beta, &dbeta);
                let (d_pooled, d_sc_pw) =
                    pointwise_backward(&dc.pooled, &params.view2(d.sc_pw), &d_sc_pre);
                grads.accumulate(d.sc_pw, &d_sc_pw);
                let dx_sc = avgpool2_backward(&d_pooled);
                dy = &dx_main + &dx_sc;
            }
        }

        // Stem (input gradient not needed).
        let dz = relu_backward(&dy, &cache.stem.y);
        let (d_conv, dgamma, dbeta) =
            bn_backward(&cache.stem.bn, &params.view1(self.stem.bn.gamma), &dz);
        grads.accumulate(self.stem.bn.gamma, &dgamma);
        grads.accumulate(self.stem.bn.beta, &dbeta);
        let pad = self.config.stem_size / 2;
        let (_, dw) = conv1d_backward(
            &cache.stem.x,
            &params.view3(self.stem.w),
            self.config.stem_stride,
            pad,
            &d_conv,
            false,
        );
        grads.accumulate(self.stem.w, &dw);

        grads
    }
}

/// Compares analytic gradients with central finite differences on a
/// sampled subset of every trainable tensor. Returns the maximum relative
/// error and the number of elements checked.
///
/// Runs at 64-bit precision; the loss is the cross-entropy of the
/// training-mode forward pass (running statistics are left untouched).
pub fn finite_difference_check<R: Rng + ?Sized>(
    model: &Resnet1d,
    params: &mut Parameters<f64>,
    x: &Array3<f64>,
    targets: &[usize],
    samples_per_tensor: usize,
    eps: f64,
    rng: &mut R,
) -> Result<(f64, usize)> {
    use crate::nn::loss::cross_entropy;

    let pass = model.forward_cached(params, x)?;
    let analytic = model.backward(params, &pass.cache, targets);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for id in params.tensor_ids().collect::<Vec<_>>() {
        if params.spec(id).kind != ParamKind::Trainable {
            continue;
        }
        let numel = params.get(id).len();
        let picks = rand::seq::index::sample(rng, numel, samples_per_tensor.min(numel));
        for idx in picks {
            let orig = params.get(id).as_slice().expect("standard layout")[idx];
            params.get_mut(id).as_slice_mut().unwrap()[idx] = orig + eps;
            let up = cross_entropy(&model.forward_cached(params, x)?.probs, targets);
            params.get_mut(id).as_slice_mut().unwrap()[idx] = orig - eps;
            let down = cross_entropy(&model.forward_cached(params, x)?.probs, targets);
            params.get_mut(id).as_slice_mut().unwrap()[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = analytic.get(id).as_slice().unwrap()[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok((max_rel, checked))
}
