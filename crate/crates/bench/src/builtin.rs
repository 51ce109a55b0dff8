//! Scenarios shipped with the binary. Each is also a regular scenario file
//! under `scenarios/`, usable as a template.

use crate::scenario::Scenario;

const SOURCES: &[(&str, &str)] = &[
    (
        "scale-invariance",
        include_str!("../scenarios/scale-invariance.toml"),
    ),
    ("mu-sweep", include_str!("../scenarios/mu-sweep.toml")),
    (
        "mu-sweep-illcond",
        include_str!("../scenarios/mu-sweep-illcond.toml"),
    ),
    ("b-sweep", include_str!("../scenarios/b-sweep.toml")),
    (
        "b-sweep-illcond",
        include_str!("../scenarios/b-sweep-illcond.toml"),
    ),
    (
        "low-sampling",
        include_str!("../scenarios/low-sampling.toml"),
    ),
    ("noisy", include_str!("../scenarios/noisy.toml")),
    (
        "ill-conditioned",
        include_str!("../scenarios/ill-conditioned.toml"),
    ),
    ("rectangular", include_str!("../scenarios/rectangular.toml")),
    ("jester-r5", include_str!("../scenarios/jester-r5.toml")),
    ("jester-r7", include_str!("../scenarios/jester-r7.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(name, _)| *name)
}

pub fn get(name: &str) -> Option<Scenario> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::parse(text, false).expect("built-in scenarios parse"))
}

pub fn all() -> Vec<Scenario> {
    names().map(|n| get(n).expect("listed")).collect()
}
