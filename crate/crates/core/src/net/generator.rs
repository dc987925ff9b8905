use std::collections::HashMap;
use std::sync::Mutex;

use crate::conv::{ConvLayer, GatedCache, GatedConvLayer, InstanceNormCache, InstanceNormLayer, PadMode};
use crate::error::{Error, Result};
use crate::posenc::{build_spe, group_size, LearnablePeLayer, PeGroup, SpeMode};
use crate::probe::InputJacobian;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::{upsample_nearest2, upsample_nearest2_adjoint, ParamMut, ParamRef, Parameterized};

/// Architecture of the completion network.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Output channels of each encoder stage. Stage 0 keeps the resolution,
    /// every later stage halves it; the decoder mirrors the strided stages.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pad_mode: PadMode,
    /// Encoding group injected in front of every encoder stage, if any.
    pub pe_group: Option<PeGroup>,
    pub pe_mode: SpeMode,
    /// Sin/cos pairs per axis of the encoding stack.
    pub pe_pairs: usize,
    /// Composite the known pixels back into the output.
    pub paste_known: bool,
    pub image_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            channels: vec![32, 64, 128, 256, 256],
            kernel: 3,
            pad_mode: PadMode::CircularAzimuth,
            pe_group: Some(PeGroup::AP),
            pe_mode: SpeMode::Index,
            pe_pairs: 8,
            paste_known: true,
            image_channels: 3,
        }
    }
}

impl GeneratorConfig {
    pub fn stages(&self) -> usize {
        self.channels.len()
    }

    /// Spatial dims must be multiples of this.
    pub fn total_stride(&self) -> usize {
        1 << (self.stages().saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(format!("generator channels must be non-empty and positive: {:?}", self.channels)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("generator kernel must be odd, got {}", self.kernel)));
        }
        if self.pe_group.is_some() && self.pe_pairs == 0 {
            return Err(Error::Config("positional embedding needs pe_pairs >= 1".into()));
        }
        if self.image_channels == 0 {
            return Err(Error::Config("image_channels must be positive".into()));
        }
        Ok(())
    }
}

/// Optional embedding, gated conv, instance norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStage<T> {
    pub pe: Option<LearnablePeLayer<T>>,
    pub conv: GatedConvLayer<T>,
    pub norm: InstanceNormLayer<T>,
}

/// 2x upsample, skip concatenation, gated conv, instance norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage<T> {
    pub conv: GatedConvLayer<T>,
    pub norm: InstanceNormLayer<T>,
}

pub struct Generator<T = f32> {
    pub config: GeneratorConfig,
    pub encoder: Vec<EncoderStage<T>>,
    pub decoder: Vec<DecoderStage<T>>,
    pub head: ConvLayer<T>,
    spe_cache: Mutex<HashMap<(usize, usize), Tensor<T>>>,
}

impl<T: Scalar> Clone for Generator<T> {
    fn clone(&self) -> Self {
        Generator {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            head: self.head.clone(),
            spe_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Generator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator")
            .field("config", &self.config)
            .field("params", &self.param_count())
            .finish()
    }
}

struct EncCache<T> {
    spe: Option<Tensor<T>>,
    conv: GatedCache<T>,
    norm: InstanceNormCache<T>,
}

struct DecCache<T> {
    conv: GatedCache<T>,
    norm: InstanceNormCache<T>,
}

/// Everything the backward pass needs from a forward pass.
pub struct GenCache<T> {
    mask: Tensor<T>,
    paste: bool,
    enc: Vec<EncCache<T>>,
    dec: Vec<DecCache<T>>,
    head_input: Tensor<T>,
    /// Raw `tanh` prediction before compositing.
    pub prediction: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct GeneratorGrads<T> {
    pub masked_image: Tensor<T>,
    pub mask: Tensor<T>,
    /// In [`Parameterized::params`] order.
    pub params: Vec<Vec<T>>,
}

const NORM_EPS: f64 = 1e-5;

impl<T: Scalar> Generator<T> {
    pub fn new(config: GeneratorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let ch = &config.channels;
        let k = config.kernel;
        let eps = T::of(NORM_EPS);
        let mut encoder = Vec::with_capacity(ch.len());
        for (i, &c_out) in ch.iter().enumerate() {
            let c_in = if i == 0 { config.image_channels + 1 } else { ch[i - 1] };
            let pe = match config.pe_group {
                Some(g) => {
                    let s = group_size(g, config.pe_pairs, config.pe_pairs);
                    Some(LearnablePeLayer::random(rng, c_in, s, g)?)
                }
                None => None,
            };
            let stride = if i == 0 { 1 } else { 2 };
            encoder.push(EncoderStage {
                pe,
                conv: GatedConvLayer::random(rng, c_in, c_out, k, stride, config.pad_mode)?,
                norm: InstanceNormLayer::new(c_out, eps)?,
            });
        }
        let mut decoder = Vec::with_capacity(ch.len() - 1);
        for level in (0..ch.len() - 1).rev() {
            let c_in = ch[level + 1] + ch[level];
            decoder.push(DecoderStage {
                conv: GatedConvLayer::random(rng, c_in, ch[level], k, 1, config.pad_mode)?,
                norm: InstanceNormLayer::new(ch[level], eps)?,
            });
        }
        let head = ConvLayer::random(rng, ch[0], config.image_channels, (k, k), (1, 1), config.pad_mode)?;
        Ok(Generator { config, encoder, decoder, head, spe_cache: Mutex::new(HashMap::new()) })
    }

    /// Selected encoding channels at one resolution, built on first use.
    fn spe_at(&self, h: usize, w: usize) -> Result<Tensor<T>> {
        let group = self.config.pe_group.expect("only called with an embedding group");
        let mut cache = self.spe_cache.lock().unwrap();
        if let Some(t) = cache.get(&(h, w)) {
            return Ok(t.clone());
        }
        let p = self.config.pe_pairs;
        let t = build_spe(h, w, p, p, self.config.pe_mode)?.select_group(group).cast::<T>();
        cache.insert((h, w), t.clone());
        Ok(t)
    }

    fn check_inputs(&self, masked_image: &Tensor<T>, mask: &Tensor<T>) -> Result<()> {
        let [n, c, h, w] = masked_image.shape();
        if c != self.config.image_channels {
            return Err(Error::Shape(format!("generator expects {} image channels, got {c}", self.config.image_channels)));
        }
        if mask.shape() != [n, 1, h, w] {
            return Err(Error::Shape(format!("mask {:?} does not match image {:?}", mask.shape(), masked_image.shape())));
        }
        let s = self.config.total_stride();
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(Error::Shape(format!("input {h}x{w} is not divisible by the total stride {s}")));
        }
        if mask.data().iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(Error::Param("mask values must be 0 or 1".into()));
        }
        let one = T::one() + T::of(1e-6);
        if masked_image.data().iter().any(|v| v.abs() > one) {
            return Err(Error::Param("masked image values must lie in [-1, 1]".into()));
        }
        masked_image.ensure_finite("generator input")
    }

    pub fn forward(&self, masked_image: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(masked_image, mask)?.0)
    }

    /// Like [`Generator::forward`] but never composites, whatever the config says.
    pub fn predict(&self, masked_image: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_cached_with(masked_image, mask, false).map(|r| r.0)
    }

    pub fn forward_cached(&self, masked_image: &Tensor<T>, mask: &Tensor<T>) -> Result<(Tensor<T>, GenCache<T>)> {
        self.forward_cached_with(masked_image, mask, self.config.paste_known)
    }

    /// Forward pass with compositing chosen per call; training uses
    /// `paste = false` so the losses see the raw prediction.
    pub fn forward_cached_with(
        &self,
        masked_image: &Tensor<T>,
        mask: &Tensor<T>,
        paste: bool,
    ) -> Result<(Tensor<T>, GenCache<T>)> {
        self.check_inputs(masked_image, mask)?;
        let mut act = Tensor::concat_channels(&[masked_image, mask])?;
        let mut enc = Vec::with_capacity(self.encoder.len());
        let mut skips = Vec::with_capacity(self.encoder.len());
        for stage in &self.encoder {
            let (input, spe) = match &stage.pe {
                Some(pe) => {
                    let spe = self.spe_at(act.height(), act.width())?;
                    (pe.apply(&act, &spe)?, Some(spe))
                }
                None => (act, None),
            };
            let (g, conv) = stage.conv.forward_cached(&input)?;
            let (e, norm) = stage.norm.forward_cached(&g)?;
            enc.push(EncCache { spe, conv, norm });
            skips.push(e.clone());
            act = e;
        }
        let levels = self.encoder.len();
        let mut dec = Vec::with_capacity(self.decoder.len());
        for (j, stage) in self.decoder.iter().enumerate() {
            let level = levels - 2 - j;
            let up = upsample_nearest2(&act);
            let cat = Tensor::concat_channels(&[&up, &skips[level]])?;
            let (g, conv) = stage.conv.forward_cached(&cat)?;
            let (d, norm) = stage.norm.forward_cached(&g)?;
            dec.push(DecCache { conv, norm });
            act = d;
        }
        let prediction = self.head.forward(&act)?.map(|v| v.tanh());
        let out = if paste {
            composite(masked_image, mask, &prediction)
        } else {
            prediction.clone()
        };
        out.ensure_finite("generator_forward")?;
        Ok((out, GenCache { mask: mask.clone(), paste, enc, dec, head_input: act, prediction }))
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &GenCache<T>, grad_out: &Tensor<T>) -> Result<GeneratorGrads<T>> {
        if grad_out.shape() != cache.prediction.shape() {
            return Err(Error::Shape(format!(
                "generator grad_out {:?} vs output {:?}",
                grad_out.shape(),
                cache.prediction.shape()
            )));
        }
        let [n, ic, h, w] = grad_out.shape();
        let mask = &cache.mask;
        // compositing: out = m * x + (1 - m) * pred
        let mut g_image_paste = Tensor::zeros([n, ic, h, w]);
        let mut g_pred = grad_out.clone();
        if cache.paste {
            for i in 0..n {
                let m = mask.plane(i, 0);
                for c in 0..ic {
                    let go = grad_out.plane(i, c);
                    let gi = g_image_paste.plane_mut(i, c);
                    for (k, &mv) in m.iter().enumerate() {
                        gi[k] = go[k] * mv;
                    }
                    let gp = g_pred.plane_mut(i, c);
                    for (k, &mv) in m.iter().enumerate() {
                        gp[k] *= T::one() - mv;
                    }
                }
            }
        }
        let g_pre = g_pred.zip_map(&cache.prediction, |g, p| g * (T::one() - p * p))?;
        let head = self.head.backward(&cache.head_input, &g_pre)?;

        let levels = self.encoder.len();
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; levels];
        let mut dec_params: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.decoder.len()];
        let mut g = head.input;
        for (j, stage) in self.decoder.iter().enumerate().rev() {
            let level = levels - 2 - j;
            let c = &cache.dec[j];
            let gn = stage.norm.backward(&c.norm, &g)?;
            let gc = stage.conv.backward(&c.conv, &gn.input)?;
            let up_ch = self.config.channels[level + 1];
            let mut parts = gc.input.split_channels(&[up_ch, self.config.channels[level]])?;
            let g_skip = parts.pop().unwrap();
            let g_up = parts.pop().unwrap();
            accumulate(&mut skip_grads[level], g_skip)?;
            g = upsample_nearest2_adjoint(&g_up);
            dec_params[j] = vec![
                gc.feature_weight.into_data(),
                gc.feature_bias,
                gc.gate_weight.into_data(),
                gc.gate_bias,
                gn.gamma,
                gn.beta,
            ];
        }
        // the bottleneck feeds the first decoder stage directly
        accumulate(&mut skip_grads[levels - 1], g)?;

        let mut enc_params: Vec<Vec<Vec<T>>> = vec![Vec::new(); levels];
        let mut g_next: Option<Tensor<T>> = None;
        for (i, stage) in self.encoder.iter().enumerate().rev() {
            let mut g = skip_grads[i].take().expect("every stage has a skip gradient");
            if let Some(gn) = g_next.take() {
                g.add_assign(&gn)?;
            }
            let c = &cache.enc[i];
            let gn = stage.norm.backward(&c.norm, &g)?;
            let gc = stage.conv.backward(&c.conv, &gn.input)?;
            let mut params = Vec::with_capacity(7);
            let g_in = match (&stage.pe, &c.spe) {
                (Some(pe), Some(spe)) => {
                    let (g_in, g_w) = pe.backward(spe, &gc.input)?;
                    params.push(g_w.into_data());
                    g_in
                }
                _ => gc.input,
            };
            params.extend([
                gc.feature_weight.into_data(),
                gc.feature_bias,
                gc.gate_weight.into_data(),
                gc.gate_bias,
                gn.gamma,
                gn.beta,
            ]);
            enc_params[i] = params;
            g_next = Some(g_in);
        }
        let g_x0 = g_next.expect("at least one encoder stage");
        let mut parts = g_x0.split_channels(&[ic, 1])?;
        let g_mask = parts.pop().unwrap();
        let mut g_image = parts.pop().unwrap();
        g_image.add_assign(&g_image_paste)?;

        let mut params: Vec<Vec<T>> = enc_params.into_iter().flatten().collect();
        params.extend(dec_params.into_iter().flatten());
        params.push(head.weight.into_data());
        params.push(head.bias);
        for (p, name) in params.iter().zip(self.params().iter().map(|p| &p.name)) {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for {name}")));
            }
        }
        Ok(GeneratorGrads { masked_image: g_image, mask: g_mask, params })
    }

    /// All 2D conv kernels with their layer names, for kernel statistics.
    pub fn conv_layers(&self) -> Vec<(String, &ConvLayer<T>)> {
        let mut out = Vec::new();
        for (i, s) in self.encoder.iter().enumerate() {
            out.push((format!("enc{i}.feature"), &s.conv.feature));
            out.push((format!("enc{i}.gate"), &s.conv.gate));
        }
        for (j, s) in self.decoder.iter().enumerate() {
            out.push((format!("dec{j}.feature"), &s.conv.feature));
            out.push((format!("dec{j}.gate"), &s.conv.gate));
        }
        out.push(("head".to_string(), &self.head));
        out
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(t) => t.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// `mask * image + (1 - mask) * prediction`, mask broadcast over channels
/// and, when it has a single item, over the batch.
pub fn composite<T: Scalar>(image: &Tensor<T>, mask: &Tensor<T>, prediction: &Tensor<T>) -> Tensor<T> {
    let [n, c, _, _] = image.shape();
    let mut out = prediction.clone();
    for i in 0..n {
        let m = mask.plane(if mask.batch() == 1 { 0 } else { i }, 0);
        for ch in 0..c {
            let src = image.plane(i, ch);
            for ((o, &mv), &s) in out.plane_mut(i, ch).iter_mut().zip(m).zip(src) {
                *o = mv * s + (T::one() - mv) * *o;
            }
        }
    }
    out
}

fn conv_params<'a, T: Scalar>(out: &mut Vec<ParamRef<'a, T>>, prefix: &str, l: &'a ConvLayer<T>) {
    out.push(ParamRef { name: format!("{prefix}.weight"), shape: l.weight.shape(), data: l.weight.data() });
    out.push(ParamRef { name: format!("{prefix}.bias"), shape: [1, 1, 1, l.bias.len()], data: &l.bias });
}

fn conv_params_mut<'a, T: Scalar>(out: &mut Vec<ParamMut<'a, T>>, prefix: &str, l: &'a mut ConvLayer<T>) {
    let shape = l.weight.shape();
    let blen = l.bias.len();
    out.push(ParamMut { name: format!("{prefix}.weight"), shape, data: l.weight.data_mut() });
    out.push(ParamMut { name: format!("{prefix}.bias"), shape: [1, 1, 1, blen], data: &mut l.bias });
}

fn norm_params<'a, T: Scalar>(out: &mut Vec<ParamRef<'a, T>>, prefix: &str, l: &'a InstanceNormLayer<T>) {
    let c = l.gamma.len();
    out.push(ParamRef { name: format!("{prefix}.gamma"), shape: [1, 1, 1, c], data: &l.gamma });
    out.push(ParamRef { name: format!("{prefix}.beta"), shape: [1, 1, 1, c], data: &l.beta });
}

fn norm_params_mut<'a, T: Scalar>(out: &mut Vec<ParamMut<'a, T>>, prefix: &str, l: &'a mut InstanceNormLayer<T>) {
    let c = l.gamma.len();
    out.push(ParamMut { name: format!("{prefix}.gamma"), shape: [1, 1, 1, c], data: &mut l.gamma });
    out.push(ParamMut { name: format!("{prefix}.beta"), shape: [1, 1, 1, c], data: &mut l.beta });
}

impl<T: Scalar> Parameterized<T> for Generator<T> {
    fn params(&self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        for (i, s) in self.encoder.iter().enumerate() {
            if let Some(pe) = &s.pe {
                out.push(ParamRef { name: format!("enc{i}.pe.weight"), shape: pe.weight.shape(), data: pe.weight.data() });
            }
            conv_params(&mut out, &format!("enc{i}.feature"), &s.conv.feature);
            conv_params(&mut out, &format!("enc{i}.gate"), &s.conv.gate);
            norm_params(&mut out, &format!("enc{i}.norm"), &s.norm);
        }
        for (j, s) in self.decoder.iter().enumerate() {
            conv_params(&mut out, &format!("dec{j}.feature"), &s.conv.feature);
            conv_params(&mut out, &format!("dec{j}.gate"), &s.conv.gate);
            norm_params(&mut out, &format!("dec{j}.norm"), &s.norm);
        }
        conv_params(&mut out, "head", &self.head);
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (i, s) in self.encoder.iter_mut().enumerate() {
            if let Some(pe) = &mut s.pe {
                let shape = pe.weight.shape();
                out.push(ParamMut { name: format!("enc{i}.pe.weight"), shape, data: pe.weight.data_mut() });
            }
            conv_params_mut(&mut out, &format!("enc{i}.feature"), &mut s.conv.feature);
            conv_params_mut(&mut out, &format!("enc{i}.gate"), &mut s.conv.gate);
            norm_params_mut(&mut out, &format!("enc{i}.norm"), &mut s.norm);
        }
        for (j, s) in self.decoder.iter_mut().enumerate() {
            conv_params_mut(&mut out, &format!("dec{j}.feature"), &mut s.conv.feature);
            conv_params_mut(&mut out, &format!("dec{j}.gate"), &mut s.conv.gate);
            norm_params_mut(&mut out, &format!("dec{j}.norm"), &mut s.norm);
        }
        conv_params_mut(&mut out, "head", &mut self.head);
        out
    }
}

/// `max |G(shift_k x) - shift_k G(x)|` for an azimuthal roll by `k` columns.
pub fn azimuth_shift_deviation<T: Scalar>(
    gen: &Generator<T>,
    masked_image: &Tensor<T>,
    mask: &Tensor<T>,
    k: isize,
) -> Result<f64> {
    let base = gen.forward(masked_image, mask)?.circular_shift_azimuth(k);
    let shifted = gen.forward(&masked_image.circular_shift_azimuth(k), &mask.circular_shift_azimuth(k))?;
    Ok(base.max_abs_diff(&shifted)?.f64())
}

/// Probes a generator's dependence on its image input under a fixed mask.
pub struct GeneratorInputProbe<'a, T> {
    pub generator: &'a Generator<T>,
    pub mask: Tensor<T>,
}

impl<T: Scalar> InputJacobian<T> for GeneratorInputProbe<'_, T> {
    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.generator.forward(input, &self.mask)
    }

    fn input_vjp(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, cache) = self.generator.forward_cached(input, &self.mask)?;
        Ok(self.generator.backward(&cache, grad_out)?.masked_image)
    }
}
