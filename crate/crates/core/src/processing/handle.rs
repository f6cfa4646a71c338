use std::fmt;
use std::sync::Arc;

use bytemuck::Pod;

/// `map(input, output, context)`.
pub type MapFn = Arc<dyn Fn(&[u8], &mut [u8], &[u8]) + Send + Sync>;
/// Initializes one output entry.
pub type InitFn = Arc<dyn Fn(&mut [u8]) + Send + Sync>;
/// `map_to_val(input, value, context) -> key`: writes the value to
/// accumulate and returns the output index it goes to.
pub type MapToValFn = Arc<dyn Fn(&[u8], &mut [u8], &[u8]) -> usize + Send + Sync>;
/// `acc(dest, src)`: folds `src` into `dest`. Must be commutative and
/// associative.
pub type AccFn = Arc<dyn Fn(&mut [u8], &[u8]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandleKind {
    Map,
    Reduce,
    Zip,
}

impl HandleKind {
    pub fn name(self) -> &'static str {
        match self {
            HandleKind::Map => "map",
            HandleKind::Reduce => "reduce",
            HandleKind::Zip => "zip",
        }
    }
}

/// Index of a handle in a context's handle table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HandleId(pub(crate) usize);

impl fmt::Display for HandleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The user callbacks of a handle. Callbacks work on raw element bytes;
/// the `typed_*` constructors wrap plain-data closures.
#[derive(Clone, Default)]
pub struct HandleFunctions {
    pub map: Option<MapFn>,
    pub init: Option<InitFn>,
    pub map_to_val: Option<MapToValFn>,
    pub acc: Option<AccFn>,
}

impl fmt::Debug for HandleFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HandleFunctions")
            .field("map", &self.map.is_some())
            .field("init", &self.init.is_some())
            .field("map_to_val", &self.map_to_val.is_some())
            .field("acc", &self.acc.is_some())
            .finish()
    }
}

impl HandleFunctions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_map(mut self, f: impl Fn(&[u8], &mut [u8], &[u8]) + Send + Sync + 'static) -> Self {
        self.map = Some(Arc::new(f));
        self
    }

    pub fn with_init(mut self, f: impl Fn(&mut [u8]) + Send + Sync + 'static) -> Self {
        self.init = Some(Arc::new(f));
        self
    }

    pub fn with_map_to_val(
        mut self,
        f: impl Fn(&[u8], &mut [u8], &[u8]) -> usize + Send + Sync + 'static,
    ) -> Self {
        self.map_to_val = Some(Arc::new(f));
        self
    }

    pub fn with_acc(mut self, f: impl Fn(&mut [u8], &[u8]) + Send + Sync + 'static) -> Self {
        self.acc = Some(Arc::new(f));
        self
    }

    /// Map callback over plain-data element types. The closure also receives
    /// the raw context bytes.
    pub fn typed_map<I: Pod, O: Pod>(f: impl Fn(I, &[u8]) -> O + Send + Sync + 'static) -> Self {
        Self::new().with_map(move |input, output, ctx| {
            let out = f(bytemuck::pod_read_unaligned(input), ctx);
            output.copy_from_slice(bytemuck::bytes_of(&out));
        })
    }

    /// Reduction callbacks over plain-data types: `init` produces the
    /// identity, `map_to_val` returns `(value, key)`.
    pub fn typed_reduce<I: Pod, V: Pod>(
        init: impl Fn() -> V + Send + Sync + 'static,
        map_to_val: impl Fn(I, &[u8]) -> (V, usize) + Send + Sync + 'static,
        acc: impl Fn(V, V) -> V + Send + Sync + 'static,
    ) -> Self {
        Self::new()
            .with_init(move |entry| entry.copy_from_slice(bytemuck::bytes_of(&init())))
            .with_map_to_val(move |input, value, ctx| {
                let (v, key) = map_to_val(bytemuck::pod_read_unaligned(input), ctx);
                value.copy_from_slice(bytemuck::bytes_of(&v));
                key
            })
            .with_acc(move |dest, src| {
                let a: V = bytemuck::pod_read_unaligned(dest);
                let b: V = bytemuck::pod_read_unaligned(src);
                dest.copy_from_slice(bytemuck::bytes_of(&acc(a, b)));
            })
    }
}

/// A registered computation: callbacks plus the context bytes every core
/// sees while running it.
#[derive(Debug, Clone)]
pub struct Handle {
    pub(crate) kind: HandleKind,
    pub(crate) functions: HandleFunctions,
    pub(crate) context: Vec<u8>,
    /// Bank offset of the context copy, once transferred.
    pub(crate) resident_at: Option<usize>,
    pub(crate) dirty: bool,
}

impl Handle {
    pub fn kind(&self) -> HandleKind {
        self.kind
    }

    pub fn functions(&self) -> &HandleFunctions {
        &self.functions
    }

    pub fn context(&self) -> &[u8] {
        &self.context
    }

    pub fn context_size(&self) -> usize {
        self.context.len()
    }
}
