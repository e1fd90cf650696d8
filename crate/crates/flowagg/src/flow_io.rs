//! Middlebury `.flo` files.

use std::fs;
use std::path::Path;

use flowagg_core::{FlowField, NonFinitePolicy};

use crate::error::{FormatError, Result};

pub fn read_flo(path: impl AsRef<Path>, policy: NonFinitePolicy) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    FlowField::decode_flo(&bytes, policy).map_err(|source| FormatError::Flow {
        path: path.to_owned(),
        source,
    })
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, flow.encode_flo()).map_err(|e| FormatError::io(path, e))
}
