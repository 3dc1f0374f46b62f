//! Physical constants (CODATA 2018) in CGS units, plus the conventional
//! GRW parameter point used as the default CSL parameter set.

/// Speed of light, cm/s (exact).
pub const C_LIGHT: f64 = 2.997_924_58e10;

/// Reduced Planck constant, erg*s.
pub const HBAR: f64 = 1.054_571_817e-27;

/// Reduced Planck constant, eV*s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

/// Newton constant, cm^3 g^-1 s^-2.
pub const G_NEWTON: f64 = 6.674_30e-8;

/// Proton mass, g.
pub const M_PROTON: f64 = 1.672_621_923_69e-24;

/// Electron mass, g.
pub const M_ELECTRON: f64 = 9.109_383_701_5e-28;

/// One electron-volt, erg (exact).
pub const EV_ERG: f64 = 1.602_176_634e-12;

/// hbar*c, eV*cm.
pub const HBAR_C_EV_CM: f64 = 1.973_269_804_4e-5;

/// Conventional collapse rate per nucleon, 1/s.
pub const GRW_LAMBDA: f64 = 1e-16;

/// Conventional smearing length, cm.
pub const GRW_LENGTH: f64 = 1e-5;

/// Planck mass sqrt(hbar c / G), g.
pub fn planck_mass() -> f64 {
    (HBAR * C_LIGHT / G_NEWTON).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planck_mass_value() {
        // sqrt(1.0546e-27 * 2.998e10 / 6.674e-8) = 2.1764e-5 g
        let m = planck_mass();
        assert!((m / 2.176_43e-5 - 1.0).abs() < 1e-4, "m_pl = {m}");
    }

    #[test]
    fn electron_proton_ratio() {
        let r = M_ELECTRON / M_PROTON;
        assert!((r / 5.446_170_2e-4 - 1.0).abs() < 1e-6);
    }
}
