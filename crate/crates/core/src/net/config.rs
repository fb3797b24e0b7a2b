use crate::attention::RsaConfig;
use crate::config::{join, parse_list, parse_ratio, parse_value, Configurable};
use crate::error::{Error, Result};

/// Architecture of the unrolled network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub unroll: usize,
    /// Down-scaling factor of each unit's feature grid; `1/2` upsamples.
    pub scale_factors: [f64; 3],
    pub window_size: usize,
    pub rfb_depth: usize,
    pub attn_scales: [Vec<usize>; 3],
    pub heads_per_scale: usize,
    pub mlp_ratio: f64,
    pub lambda_init: f64,
    /// Registered attention kernel name (`rsa` or `mhsa`).
    pub attention: String,
    pub use_ru2: bool,
    pub use_ru3: bool,
    pub use_rm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 24,
            unroll: 5,
            scale_factors: [4.0, 2.0, 0.5],
            window_size: 4,
            rfb_depth: 2,
            attn_scales: [vec![1, 3], vec![1, 3], vec![1, 3]],
            heads_per_scale: 1,
            mlp_ratio: 2.0,
            lambda_init: 0.9,
            attention: "rsa".to_string(),
            use_ru2: true,
            use_ru3: true,
            use_rm: true,
        }
    }
}

/// One 3×3 convolution of an encoder or decoder stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub stride: usize,
    pub transposed: bool,
    pub cin: usize,
    pub cout: usize,
    pub relu: bool,
}

impl ConvLayer {
    pub const KERNEL: usize = 3;

    pub fn weight_shape(&self) -> Vec<usize> {
        let k = Self::KERNEL;
        if self.transposed {
            vec![k, k, self.cout, self.cin]
        } else {
            vec![k, k, self.cin, self.cout]
        }
    }

    pub fn num_params(&self) -> usize {
        Self::KERNEL * Self::KERNEL * self.cin * self.cout + self.cout
    }
}

/// Geometry and layer stacks of one recurrent unit.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitPlan {
    /// 1-based unit index.
    pub index: usize,
    pub feature_h: usize,
    pub feature_w: usize,
    pub encoder: Vec<ConvLayer>,
    pub decoder: Vec<ConvLayer>,
    pub rsa: RsaConfig,
}

impl UnitPlan {
    pub fn prefix(&self) -> String {
        format!("ru{}", self.index)
    }
}

/// `(down, up)` stride-2 stages realizing a power-of-two scale factor.
fn resampling(s: f64) -> Result<(usize, usize)> {
    if !(s > 0.0) {
        return Err(Error::config(format!("scale factor {s} must be positive")));
    }
    let e = s.log2().round();
    if (2f64.powf(e) - s).abs() > 1e-9 * s || e.abs() > 6.0 {
        return Err(Error::config(format!("scale factor {s} is not a power of two")));
    }
    Ok(if e >= 0.0 { (e as usize, 0) } else { (0, (-e) as usize) })
}

impl ModelConfig {
    pub fn active_units(&self) -> Vec<usize> {
        let mut u = vec![1];
        if self.use_ru2 {
            u.push(2);
        }
        if self.use_ru3 {
            u.push(3);
        }
        u
    }

    pub fn rsa_config(&self, unit: usize) -> RsaConfig {
        RsaConfig {
            embed_dim: self.channels,
            window_size: self.window_size,
            scales: self.attn_scales[unit - 1].clone(),
            heads_per_scale: self.heads_per_scale,
            mlp_ratio: self.mlp_ratio,
            lambda_init: self.lambda_init,
            ..RsaConfig::default()
        }
    }

    /// Encoder: one stride-2 conv per halving, one stride-2 transposed conv
    /// per doubling, padded with stride-1 convs to at least two layers. The
    /// decoder inverts each resampling stage and ends in a conv to 2 channels.
    pub fn unit_plan(&self, unit: usize) -> Result<UnitPlan> {
        if !(1..=3).contains(&unit) {
            return Err(Error::config(format!("unit index {unit} out of range 1..=3")));
        }
        let (down, up) = resampling(self.scale_factors[unit - 1])?;
        let c = self.channels;
        let mut encoder = Vec::new();
        for _ in 0..down {
            encoder.push(ConvLayer { stride: 2, transposed: false, cin: c, cout: c, relu: true });
        }
        for _ in 0..up {
            encoder.push(ConvLayer { stride: 2, transposed: true, cin: c, cout: c, relu: true });
        }
        while encoder.len() < 2 {
            encoder.push(ConvLayer { stride: 1, transposed: false, cin: c, cout: c, relu: true });
        }
        encoder[0].cin = 2;
        encoder.last_mut().unwrap().relu = false;
        let mut decoder = Vec::new();
        for _ in 0..down {
            decoder.push(ConvLayer { stride: 2, transposed: true, cin: c, cout: c, relu: true });
        }
        for _ in 0..up {
            decoder.push(ConvLayer { stride: 2, transposed: false, cin: c, cout: c, relu: true });
        }
        decoder.push(ConvLayer { stride: 1, transposed: false, cin: c, cout: 2, relu: false });

        let factor = 1usize << down;
        if self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::config(format!(
                "ru{unit}: image {}x{} is not divisible by scale factor {}",
                self.height, self.width, self.scale_factors[unit - 1]
            )));
        }
        let feature_h = (self.height << up) / factor;
        let feature_w = (self.width << up) / factor;
        if feature_h % self.window_size != 0 || feature_w % self.window_size != 0 {
            return Err(Error::config(format!(
                "ru{unit}: feature grid {feature_h}x{feature_w} is not divisible by window size {}",
                self.window_size
            )));
        }
        let rsa = self.rsa_config(unit);
        rsa.validate()?;
        Ok(UnitPlan { index: unit, feature_h, feature_w, encoder, decoder, rsa })
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::config("height, width and channels must be positive"));
        }
        if self.unroll == 0 {
            return Err(Error::config("unroll length must be at least 1"));
        }
        if self.rfb_depth == 0 {
            return Err(Error::config("rfb_depth must be at least 1"));
        }
        for u in self.active_units() {
            self.unit_plan(u)?;
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("{key} = {value:?}: expected a boolean"))),
    }
}

impl Configurable for ModelConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "height" => self.height = parse_value(key, value)?,
            "width" => self.width = parse_value(key, value)?,
            "channels" => self.channels = parse_value(key, value)?,
            "unroll" => self.unroll = parse_value(key, value)?,
            "scale_factors" => {
                let v: Vec<f64> = value.split(',').map(|s| parse_ratio(key, s.trim())).collect::<Result<_>>()?;
                self.scale_factors = v
                    .try_into()
                    .map_err(|_| Error::config(format!("{key} needs exactly three factors")))?;
            }
            "window_size" => self.window_size = parse_value(key, value)?,
            "rfb_depth" => self.rfb_depth = parse_value(key, value)?,
            "ru1_scales" => self.attn_scales[0] = parse_list(key, value)?,
            "ru2_scales" => self.attn_scales[1] = parse_list(key, value)?,
            "ru3_scales" => self.attn_scales[2] = parse_list(key, value)?,
            "heads_per_scale" => self.heads_per_scale = parse_value(key, value)?,
            "mlp_ratio" => self.mlp_ratio = parse_value(key, value)?,
            "lambda_init" => self.lambda_init = parse_value(key, value)?,
            "attention" => self.attention = value.to_string(),
            "use_ru2" => self.use_ru2 = parse_bool(key, value)?,
            "use_ru3" => self.use_ru3 = parse_bool(key, value)?,
            "use_rm" => self.use_rm = parse_bool(key, value)?,
            _ => return Err(Error::config(format!("unknown model setting {key:?}"))),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(String, String)> {
        let e = |k: &str, v: String| (k.to_string(), v);
        vec![
            e("height", self.height.to_string()),
            e("width", self.width.to_string()),
            e("channels", self.channels.to_string()),
            e("unroll", self.unroll.to_string()),
            e("scale_factors", join(&self.scale_factors)),
            e("window_size", self.window_size.to_string()),
            e("rfb_depth", self.rfb_depth.to_string()),
            e("ru1_scales", join(&self.attn_scales[0])),
            e("ru2_scales", join(&self.attn_scales[1])),
            e("ru3_scales", join(&self.attn_scales[2])),
            e("heads_per_scale", self.heads_per_scale.to_string()),
            e("mlp_ratio", self.mlp_ratio.to_string()),
            e("lambda_init", self.lambda_init.to_string()),
            e("attention", self.attention.clone()),
            e("use_ru2", self.use_ru2.to_string()),
            e("use_ru3", self.use_ru3.to_string()),
            e("use_rm", self.use_rm.to_string()),
        ]
    }
}
