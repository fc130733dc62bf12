//! Constructive CCG supertagging.
//!
//! Categories are modelled as binary trees of slashes and atoms
//! ([`category`]) and predicted top-down by pluggable neural decoders
//! ([`decoders`]) on top of a small reverse-mode autodiff engine
//! ([`autodiff`]).

pub mod autodiff;
pub mod category;
pub mod corpus;
pub mod decoders;
pub mod encoder;
pub mod eval;
pub mod train;
