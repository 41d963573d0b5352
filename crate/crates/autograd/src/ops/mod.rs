pub mod attention;
mod basic;
pub mod conv;
mod linear;
pub mod loss;
mod norm;
mod roi;
