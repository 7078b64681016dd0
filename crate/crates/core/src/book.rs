// Compiles the guide's code blocks as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub struct Introduction;

#[doc = include_str!("../../../book/src/field.md")]
pub struct Field;

#[doc = include_str!("../../../book/src/sampling.md")]
pub struct Sampling;

#[doc = include_str!("../../../book/src/barriers.md")]
pub struct Barriers;

#[doc = include_str!("../../../book/src/statistics.md")]
pub struct Statistics;

#[doc = include_str!("../../../book/src/bridges.md")]
pub struct Bridges;

#[doc = include_str!("../../../book/src/poisson.md")]
pub struct Poisson;

#[doc = include_str!("../../../book/src/experiments.md")]
pub struct Experiments;

#[doc = include_str!("../../../book/src/limits.md")]
pub struct Limits;

#[doc = include_str!("../../../README.md")]
pub struct Readme;
