//! Named collections of dense little-endian tensors.

use indexmap::IndexMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorDType {
    F32,
    F64,
    U8,
}

impl TensorDType {
    pub fn size(self) -> usize {
        match self {
            TensorDType::F32 => 4,
            TensorDType::F64 => 8,
            TensorDType::U8 => 1,
        }
    }

    /// Container spelling (`"F32"`, `"F64"`, `"U8"`).
    pub fn code(self) -> &'static str {
        match self {
            TensorDType::F32 => "F32",
            TensorDType::F64 => "F64",
            TensorDType::U8 => "U8",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "F32" => Some(TensorDType::F32),
            "F64" => Some(TensorDType::F64),
            "U8" => Some(TensorDType::U8),
            _ => None,
        }
    }
}

/// A tensor as raw little-endian bytes plus dtype and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dtype: TensorDType,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

impl Tensor {
    /// `None` when the byte length does not match the shape.
    pub fn from_bytes(dtype: TensorDType, shape: Vec<usize>, bytes: Vec<u8>) -> Option<Self> {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))?
            .checked_mul(dtype.size())?;
        (n == bytes.len()).then_some(Self { dtype, shape, bytes })
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Option<Self> {
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::from_bytes(TensorDType::F32, shape, bytes)
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Option<Self> {
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::from_bytes(TensorDType::F64, shape, bytes)
    }

    pub fn from_u8(shape: Vec<usize>, values: Vec<u8>) -> Option<Self> {
        Self::from_bytes(TensorDType::U8, shape, values)
    }

    pub fn dtype(&self) -> TensorDType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn to_f32(&self) -> Option<Vec<f32>> {
        (self.dtype == TensorDType::F32).then(|| {
            self.bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
    }

    pub fn to_f64(&self) -> Option<Vec<f64>> {
        (self.dtype == TensorDType::F64).then(|| {
            self.bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
    }
}

/// Ordered name -> tensor map. Iteration order is insertion order, which is
/// also the on-disk data order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorMap {
    tensors: IndexMap<String, Tensor>,
    metadata: Option<IndexMap<String, String>>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`, keeping its original position on replace.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    /// Free-form string metadata (the `__metadata__` header entry).
    pub fn metadata(&self) -> Option<&IndexMap<String, String>> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<IndexMap<String, String>>) {
        self.metadata = metadata;
    }
}

impl FromIterator<(String, Tensor)> for TensorMap {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
            metadata: None,
        }
    }
}
