//! Refined Richter local limit approximation for normalized sums of i.i.d.
//! variables, with exact density oracles and audits of the supporting
//! inequalities.

pub mod bounds;
pub mod cli;
pub mod density;
pub mod dist;
pub mod quad;
pub mod richter;
pub mod saddle;
pub mod series;
pub mod special;
