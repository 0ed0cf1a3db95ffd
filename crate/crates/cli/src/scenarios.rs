//! Scenarios compiled into the binary.

pub struct Bundled {
    pub id: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        id: "abelian_counterexample",
        text: include_str!("../scenarios/abelian_counterexample.toml"),
    },
    Bundled {
        id: "harmonic_szego",
        text: include_str!("../scenarios/harmonic_szego.toml"),
    },
    Bundled {
        id: "quartic_ergodic_demo",
        text: include_str!("../scenarios/quartic_ergodic_demo.toml"),
    },
];

pub fn find(id: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.id == id)
}

/// `(id, description)` rows in id order.
pub fn listing() -> Vec<(&'static str, String)> {
    BUNDLED
        .iter()
        .map(|b| {
            let description = crate::config::parse(b.text).map(|c| c.description).unwrap_or_default();
            (b.id, description)
        })
        .collect()
}
