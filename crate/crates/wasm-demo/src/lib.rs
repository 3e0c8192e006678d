//! Browser bindings: simulate the printing channel, score a print against its template,
//! and inspect or validate model configurations.

use wasm_bindgen::prelude::*;

use turbo_twin::config::{reduction_preset, validate_config, LossTerm, Path, TurboConfig};
use turbo_twin::data::image_io::to_u8;
use turbo_twin::data::{random_template, synth_channel, ChannelParams};
use turbo_twin::eval::{hamming_metric, mse_metric, ssim_metric, SsimParams, BINARIZE_THRESHOLD};
use turbo_twin::grid::{DigitalTemplate, Grid};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A template and the print the simulated channel produced from it.
#[wasm_bindgen]
pub struct Simulation {
    template: DigitalTemplate,
    print: Grid,
}

#[wasm_bindgen]
impl Simulation {
    pub fn side(&self) -> usize {
        self.template.side()
    }

    /// Template pixels as 8-bit gray, row-major.
    pub fn template_pixels(&self) -> Vec<u8> {
        self.template
            .grid()
            .data()
            .iter()
            .map(|&v| to_u8(v))
            .collect()
    }

    pub fn print_pixels(&self) -> Vec<u8> {
        self.print.data().iter().map(|&v| to_u8(v)).collect()
    }

    /// Hamming distance between the template and the print binarized at 0.5.
    pub fn hamming(&self) -> f64 {
        hamming_metric(&self.template, &self.print, BINARIZE_THRESHOLD).unwrap_or(f64::NAN)
    }

    pub fn mse(&self) -> f64 {
        mse_metric(
            std::slice::from_ref(self.template.grid()),
            std::slice::from_ref(&self.print),
        )
        .unwrap_or(f64::NAN)
    }

    /// SSIM with an 11-pixel window, or a smaller odd window on small images.
    pub fn ssim(&self) -> f64 {
        let side = self.side();
        let window = if side >= 11 {
            11
        } else if side % 2 == 1 {
            side
        } else {
            side - 1
        };
        let p = SsimParams {
            window: window.max(3),
            ..SsimParams::default()
        };
        ssim_metric(self.template.grid(), &self.print, &p).unwrap_or(f64::NAN)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_native(
    side: usize,
    density: f64,
    blur_sigma: f64,
    dot_gain: f64,
    gamma: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Simulation, String> {
    let params = ChannelParams {
        blur_sigma,
        dot_gain,
        gamma,
        noise_sigma,
        seed,
    };
    params.check()?;
    if side == 0 || side > 512 {
        return Err("side must lie in [1, 512]".into());
    }
    if !(0.0..=1.0).contains(&density) {
        return Err("density must lie in [0,1]".into());
    }
    let template = random_template("demo", side, density, seed).map_err(|e| e.to_string())?;
    let print = synth_channel(&template, &params).grid().clone();
    Ok(Simulation { template, print })
}

/// Draws a random template and passes it through the channel.
#[wasm_bindgen]
pub fn simulate(
    side: usize,
    density: f64,
    blur_sigma: f64,
    dot_gain: f64,
    gamma: f64,
    noise_sigma: f64,
    seed: u32,
) -> Result<Simulation, JsValue> {
    simulate_native(
        side,
        density,
        blur_sigma,
        dot_gain,
        gamma,
        noise_sigma,
        seed as u64,
    )
    .map_err(js_err)
}

fn describe(cfg: &TurboConfig) -> String {
    let mut out = format!("pairing: {:?}\n", cfg.pairing);
    for (path, name) in [(Path::Direct, "direct"), (Path::Reverse, "reverse")] {
        let terms: Vec<String> = LossTerm::ALL
            .into_iter()
            .filter(|t| t.path() == path && cfg.is_enabled(*t))
            .map(|t| format!("{:.3}·{}", cfg.weight(t), t.key()))
            .collect();
        let sum = if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join(" + ")
        };
        out.push_str(&format!("{name}: {sum}\n"));
    }
    out
}

/// The weighted terms of a named preset's objective, one line per path.
#[wasm_bindgen]
pub fn preset_objective(name: &str) -> Result<String, JsValue> {
    reduction_preset(name).map(|c| describe(&c)).map_err(js_err)
}

pub fn check_config_native(text: &str) -> String {
    let cfg: TurboConfig = match toml::from_str(text) {
        Ok(c) => c,
        Err(e) => return format!("parse error: {e}"),
    };
    match validate_config(cfg) {
        Ok(c) => format!("valid\n{}", describe(&c)),
        Err(issues) => issues
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Parses and validates a model config written in TOML; returns "valid" plus the objective, or every issue.
#[wasm_bindgen]
pub fn check_config(text: &str) -> String {
    check_config_native(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel_scores_perfectly() {
        let s = simulate_native(16, 0.5, 0.0, 0.0, 1.0, 0.0, 3).unwrap();
        assert_eq!(s.hamming(), 0.0);
        assert_eq!(s.mse(), 0.0);
        assert!((s.ssim() - 1.0).abs() < 1e-12);
        assert_eq!(s.template_pixels(), s.print_pixels());
    }

    #[test]
    fn invalid_channel_is_reported() {
        assert!(simulate_native(16, 0.5, -1.0, 0.0, 1.0, 0.0, 0).is_err());
        assert!(simulate_native(16, 1.5, 1.0, 0.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn presets_and_validation() {
        let pix = reduction_preset("pix2pix_t2y")
            .map(|c| describe(&c))
            .unwrap();
        assert!(pix.contains("direct: 0\n"));
        assert!(
            check_config_native("gan_loss = \"wgan_gp\"\ncritic_kind = \"patch\"")
                .contains("InvalidCombination")
        );
        assert!(check_config_native("alpha = 2.0").starts_with("valid"));
    }
}
