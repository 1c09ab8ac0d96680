use super::ToyModelConfig;

/// Margin and learning rate for `step`.
///
/// The learning rate ramps linearly from 0 to `lr_init` over
/// `warmup_steps`, then decays geometrically per step to reach `lr_final`
/// at `total_steps`. The margin ramps linearly from 0 to `margin_final`
/// over `margin_warm_steps` and then holds.
pub fn schedule(step: usize, cfg: &ToyModelConfig) -> (f64, f64) {
    let margin = if step >= cfg.margin_warm_steps {
        cfg.margin_final
    } else {
        cfg.margin_final * step as f64 / cfg.margin_warm_steps as f64
    };

    let lr = if step < cfg.warmup_steps {
        cfg.lr_init * step as f64 / cfg.warmup_steps as f64
    } else if step >= cfg.total_steps {
        cfg.lr_final
    } else {
        let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
        cfg.lr_init * (cfg.lr_final / cfg.lr_init).powf(progress)
    };
    (margin, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let cfg = ToyModelConfig::new(4, 1000, 0);
        let (m0, lr0) = schedule(0, &cfg);
        assert_eq!(m0, 0.0);
        assert_eq!(lr0, 0.0);
        let (_, peak) = schedule(cfg.warmup_steps, &cfg);
        assert_eq!(peak, 0.1);
        let (m_end, lr_end) = schedule(1000, &cfg);
        assert_eq!(m_end, 0.2);
        assert!((lr_end - 5e-5).abs() / 5e-5 < 1e-9);
        for step in cfg.margin_warm_steps..=1000 {
            assert_eq!(schedule(step, &cfg).0, 0.2);
        }
    }

    #[test]
    fn monotone_phases() {
        let cfg = ToyModelConfig::new(4, 500, 0);
        let lrs: Vec<f64> = (0..=500).map(|s| schedule(s, &cfg).1).collect();
        let w = cfg.warmup_steps;
        assert!(lrs[..=w].windows(2).all(|p| p[1] > p[0]));
        assert!(lrs[w..].windows(2).all(|p| p[1] < p[0]));
        // Geometric decay: constant ratio between consecutive steps.
        let r1 = lrs[w + 1] / lrs[w];
        let r2 = lrs[400] / lrs[399];
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn no_warmup() {
        let mut cfg = ToyModelConfig::new(4, 100, 0);
        cfg.warmup_steps = 0;
        cfg.margin_warm_steps = 0;
        assert_eq!(schedule(0, &cfg), (0.2, 0.1));
    }
}
