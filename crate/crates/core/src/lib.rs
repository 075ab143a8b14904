pub mod cli;
pub mod crypto;
pub mod engine;
pub mod model;
pub mod parsers;
pub mod recovery;
pub mod scenario;
pub mod timeline;
