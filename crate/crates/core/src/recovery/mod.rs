//! Recovery of artifacts from unstructured blobs and captured HTTP traffic.

pub mod carve;
pub mod http;
pub mod net;
pub mod propfind;

pub use carve::{
    carve_configs, carve_configs_parallel, carve_configs_reader, scan_fileversion_strings, CarveHit, CarveKind,
    CarveResult, Strength,
};
pub use net::{
    extract_master_salt, parse_http_stream, parse_http_streams, Direction, HttpTransaction, NetExtraction,
    SaltSighting, StreamError,
};
pub use propfind::{extract_propfind, PropfindEntry};
