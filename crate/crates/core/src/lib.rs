pub mod kb;
pub mod query;
pub mod sampler;
pub mod data;
pub mod llm;
pub mod translator;
pub mod verbalize;
pub mod embed;
pub mod model;
pub mod ir;
pub mod egst;
pub mod fixture;
pub mod pipeline;
