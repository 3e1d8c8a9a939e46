/// Acceptance tolerances applied to every reported quantity.
///
/// Residuals are measured relative to the scale of the data they refer to,
/// e.g. `||A x - b||_inf <= feas * max(1, ||b||_inf)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub gap: f64,
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: 1e-7,
            gap: 1e-6,
            psd: 1e-7,
        }
    }
}

impl Tolerances {
    /// `feas * max(1, scale)`
    pub fn feas_at(&self, scale: f64) -> f64 {
        self.feas * scale.abs().max(1.0)
    }

    /// `gap * max(1, |value|)`
    pub fn gap_at(&self, value: f64) -> f64 {
        self.gap * value.abs().max(1.0)
    }
}
