//! Descriptions of the solution families: parameters, constraints and a
//! template entry for each, in a form the CLI can list or emit as JSON.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::FamilyEntry;
use crate::models::{Family, ALLOWED_P_RULE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchema {
    pub name: String,
    /// `real`, `complex` (written `[re, im]`) or `integer`.
    pub kind: String,
    pub constraint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub origin: String,
    pub transformation_function: String,
    pub geometry: String,
    /// 1 or 2: order of the transformation operator the suite builds.
    pub operator_order: usize,
    /// Whether a printed closed form of V₁ exists to cross-check against.
    pub printed_potential: bool,
    pub parameters: Vec<ParameterSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// A valid `[[family]]` entry.
    pub template: FamilyEntry,
}

fn param(name: &str, kind: &str, constraint: &str) -> ParameterSchema {
    ParameterSchema {
        name: name.into(),
        kind: kind.into(),
        constraint: constraint.into(),
    }
}

/// The six families in catalog order.
pub fn catalog() -> Vec<CatalogEntry> {
    let envelope_phase = param("phase", "real", "optional; phase of the envelope initial data for this entry");
    vec![
        CatalogEntry {
            name: "osc1".into(),
            origin: "time-dependent harmonic oscillator, first orbit".into(),
            transformation_function: "cosh-type function with lambda = -mu - i nu".into(),
            geometry: "full-line".into(),
            operator_order: 1,
            printed_potential: true,
            parameters: vec![
                param("mu", "real", "finite"),
                param("nu", "real", "nonzero"),
                envelope_phase.clone(),
            ],
            rule: Some("gamma = Re(eps) must not vanish on the time window".into()),
            template: FamilyEntry::with_phase(Family::Osc1 { mu: 0.5, nu: 1.0 }, -1.09),
        },
        CatalogEntry {
            name: "osc2".into(),
            origin: "time-dependent harmonic oscillator, second orbit".into(),
            transformation_function: "Airy-type function Q = c1 Ai + c2 Bi with complex lambda".into(),
            geometry: "full-line".into(),
            operator_order: 2,
            printed_potential: false,
            parameters: vec![
                param("lambda", "complex", "finite; Im(lambda) != 0 makes the single step complex"),
                param("airy_c1", "real", "default 1"),
                param("airy_c2", "real", "default 0; c1 and c2 not both zero"),
                envelope_phase.clone(),
            ],
            rule: Some(
                "delta = 2 Im(eps) must not vanish on the time window; the real potential comes from the \
                 second-order step with lambda and its conjugate"
                    .into(),
            ),
            template: FamilyEntry::with_phase(
                Family::Osc2 {
                    lambda: Complex64::new(0.3, 0.4),
                    airy_c1: 1.0,
                    airy_c2: 0.0,
                },
                0.48,
            ),
        },
        CatalogEntry {
            name: "osc3".into(),
            origin: "time-dependent harmonic oscillator, third orbit (discrete spectrum)".into(),
            transformation_function: "Hermite basis functions u_n, u_(n+1)".into(),
            geometry: "full-line".into(),
            operator_order: 2,
            printed_potential: true,
            parameters: vec![param("n", "integer", ">= 0"), envelope_phase.clone()],
            rule: None,
            template: FamilyEntry::new(Family::Osc3Discrete { n: 0 }),
        },
        CatalogEntry {
            name: "osc-erf".into(),
            origin: "time-dependent harmonic oscillator, third orbit (C + erf function)".into(),
            transformation_function: "u = e^(...)(C + erf(x / (2 sqrt(2 gamma))))".into(),
            geometry: "full-line".into(),
            operator_order: 1,
            printed_potential: true,
            parameters: vec![param("c", "real", "|C| > 1"), envelope_phase.clone()],
            rule: Some("|C| > 1, otherwise C + erf has a node".into()),
            template: FamilyEntry::new(Family::OscErf { c: 1.5 }),
        },
        CatalogEntry {
            name: "sing-broken".into(),
            origin: "time-dependent singular oscillator, broken supersymmetry".into(),
            transformation_function: "u_p with L_p^(2k-1)(-x^2 / (8 gamma)); neither u_p nor 1/u_p normalizable".into(),
            geometry: "half-line".into(),
            operator_order: 1,
            printed_potential: true,
            parameters: vec![
                param("g", "real", "1 + 4g >= 0; k = 1/2 + sqrt(1 + 4g)/4"),
                param("p", "integer", ">= 0"),
                envelope_phase.clone(),
            ],
            rule: None,
            template: FamilyEntry::new(Family::SingBroken { g: 2.0, p: 0 }),
        },
        CatalogEntry {
            name: "sing-exact".into(),
            origin: "time-dependent singular oscillator, exact supersymmetry".into(),
            transformation_function: "u_p with L_p^(1-2k)(-x^2 / (8 gamma)); 1/u_p normalizable".into(),
            geometry: "half-line".into(),
            operator_order: 1,
            printed_potential: true,
            parameters: vec![
                param("g", "real", "1 + 4g >= 0; k = 1/2 + sqrt(1 + 4g)/4"),
                param("p", "integer", "see rule"),
                envelope_phase,
            ],
            rule: Some(ALLOWED_P_RULE.into()),
            template: FamilyEntry::new(Family::SingExact { g: 2.0, p: 0 }),
        },
    ]
}

/// Catalog entry by family name.
pub fn lookup(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name)
}
