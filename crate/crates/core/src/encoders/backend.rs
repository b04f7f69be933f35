//! Serialized-graph runtime interface and the ONNX implementation.

use std::fmt;
use std::path::Path;

use tract_onnx::prelude::*;

use super::EncoderError;

/// Dense tensor exchanged with a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32 { shape: Vec<usize>, data: Vec<f32> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

impl TensorData {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32 { shape, .. } | TensorData::I64 { shape, .. } => shape,
        }
    }

    pub fn into_f32(self) -> Option<(Vec<usize>, Vec<f32>)> {
        match self {
            TensorData::F32 { shape, data } => Some((shape, data)),
            TensorData::I64 { .. } => None,
        }
    }
}

/// A loaded graph that maps named inputs to named outputs.
pub trait Graph: Send + Sync + fmt::Debug {
    /// Identity used in error messages (usually the file name).
    fn name(&self) -> &str;

    /// Trailing output dimension if the graph declares it statically.
    fn output_dim(&self, output: &str) -> Option<usize>;

    fn run(&self, inputs: Vec<(String, TensorData)>) -> Result<Vec<(String, TensorData)>, EncoderError>;
}

/// Something that can turn a serialized graph file into a [`Graph`].
pub trait Backend: Send + Sync {
    fn load(&self, path: &Path) -> Result<Box<dyn Graph>, EncoderError>;
}

/// Pure-Rust ONNX runtime backed by tract.
#[derive(Debug, Default, Clone, Copy)]
pub struct OnnxBackend;

impl Backend for OnnxBackend {
    fn load(&self, path: &Path) -> Result<Box<dyn Graph>, EncoderError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let err = |e: TractError| EncoderError::Backend { graph: name.clone(), message: format!("{e:#}") };
        let model = tract_onnx::onnx().model_for_path(path).map_err(err)?;
        let typed = model.into_optimized().map_err(err)?;
        let input_names = typed
            .input_outlets()
            .map_err(err)?
            .iter()
            .map(|o| typed.node(o.node).name.clone())
            .collect();
        let outputs = typed.output_outlets().map_err(err)?.to_vec();
        let mut output_names = Vec::with_capacity(outputs.len());
        let mut output_dims = Vec::with_capacity(outputs.len());
        for o in &outputs {
            let label = typed
                .outlet_label(*o)
                .map(str::to_string)
                .unwrap_or_else(|| typed.node(o.node).name.clone());
            output_names.push(label);
            let fact = typed.outlet_fact(*o).map_err(err)?;
            output_dims.push(fact.shape.last().and_then(|d| d.as_i64().map(|v| v as usize)));
        }
        let plan = typed.into_runnable().map_err(err)?;
        Ok(Box::new(OnnxGraph { name, plan, input_names, output_names, output_dims }))
    }
}

struct OnnxGraph {
    name: String,
    plan: std::sync::Arc<TypedSimplePlan>,
    input_names: Vec<String>,
    output_names: Vec<String>,
    output_dims: Vec<Option<usize>>,
}

impl fmt::Debug for OnnxGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OnnxGraph")
            .field("name", &self.name)
            .field("inputs", &self.input_names)
            .field("outputs", &self.output_names)
            .finish()
    }
}

impl OnnxGraph {
    fn backend_err(&self, message: impl Into<String>) -> EncoderError {
        EncoderError::Backend { graph: self.name.clone(), message: message.into() }
    }
}

impl Graph for OnnxGraph {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self, output: &str) -> Option<usize> {
        let idx = self.output_names.iter().position(|n| n == output)?;
        self.output_dims[idx]
    }

    fn run(&self, mut inputs: Vec<(String, TensorData)>) -> Result<Vec<(String, TensorData)>, EncoderError> {
        let mut ordered: TVec<TValue> = tvec!();
        for name in &self.input_names {
            let pos = inputs
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| self.backend_err(format!("missing input `{name}`")))?;
            let tensor = match inputs.swap_remove(pos).1 {
                TensorData::F32 { shape, data } => Tensor::from_shape(&shape, &data),
                TensorData::I64 { shape, data } => Tensor::from_shape(&shape, &data),
            }
            .map_err(|e| self.backend_err(format!("input `{name}`: {e}")))?;
            ordered.push(tensor.into());
        }
        if let Some((extra, _)) = inputs.first() {
            return Err(self.backend_err(format!("unknown input `{extra}`")));
        }
        let outputs = self.plan.run(ordered).map_err(|e| self.backend_err(format!("{e:#}")))?;
        outputs
            .into_iter()
            .zip(&self.output_names)
            .map(|(value, name)| {
                let view = value
                    .to_plain_array_view::<f32>()
                    .map_err(|e| self.backend_err(format!("output `{name}`: {e}")))?;
                let shape = view.shape().to_vec();
                let data = view.iter().copied().collect();
                Ok((name.clone(), TensorData::F32 { shape, data }))
            })
            .collect()
    }
}
