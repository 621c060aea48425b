pub mod allocation;
pub mod benchmarks;
pub mod compgraph;
pub mod driver;
pub mod ir;
pub mod preprocess;
pub mod rewrite;
pub mod sim;
pub mod synthesis;
