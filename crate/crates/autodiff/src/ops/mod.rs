mod conv;
mod elementwise;
mod linalg;
mod norm;
mod resample;
mod shape;

pub use norm::BatchNormStats;
