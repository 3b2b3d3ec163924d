//! Loads a compiled candidate and exposes it as an [`OperatorPair`].

use std::cell::RefCell;
use std::ffi::c_void;
use std::os::raw::c_int;
use std::path::Path;
use std::rc::Rc;

use rand::RngCore;
use thiserror::Error;
use vrpagent_core::{Instance, OperatorError, OperatorPair, OrderingOperator, Origin, RemovalOperator, Solution};

use crate::compile::SHIM_VERSION;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot load {path}: {reason}")]
    Library { path: String, reason: String },
    #[error("shim version {found}, expected {SHIM_VERSION}")]
    ShimVersion { found: i32 },
    #[error("candidate failed to initialize")]
    Init,
}

type CreateFn = unsafe extern "C" fn(
    c_int,
    c_int,
    *const f64,
    *const f64,
    *const c_int,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const c_int,
    u64,
) -> *mut c_void;
type DestroyFn = unsafe extern "C" fn(*mut c_void);
type SelectFn = unsafe extern "C" fn(
    *mut c_void,
    c_int,
    *const c_int,
    *const c_int,
    *const c_int,
    *const f64,
    f64,
    *mut c_int,
    c_int,
) -> c_int;
type SortFn = unsafe extern "C" fn(*mut c_void, *const c_int, c_int, *mut c_int, c_int) -> c_int;
type VersionFn = unsafe extern "C" fn() -> c_int;

struct Candidate {
    handle: *mut c_void,
    destroy: DestroyFn,
    select: SelectFn,
    sort: SortFn,
    num_nodes: usize,
    offsets: Vec<c_int>,
    customers: Vec<c_int>,
    demands: Vec<c_int>,
    costs: Vec<f64>,
    ids: Vec<c_int>,
    out: Vec<c_int>,
    // keeps the code mapped for as long as `handle` lives
    _library: libloading::Library,
}

impl Drop for Candidate {
    fn drop(&mut self) {
        unsafe { (self.destroy)(self.handle) }
    }
}

fn to_c(v: usize) -> c_int {
    c_int::try_from(v).expect("id fits in a C int")
}

fn from_c(raw: &[c_int]) -> Vec<usize> {
    // Negative ids become out-of-range values and are dropped by sanitizing.
    raw.iter().map(|&v| usize::try_from(v).unwrap_or(usize::MAX)).collect()
}

impl Candidate {
    fn output_cap(&self) -> usize {
        self.num_nodes * 2 + 16
    }

    fn select(&mut self, solution: &Solution) -> Result<Vec<usize>, OperatorError> {
        self.offsets.clear();
        self.customers.clear();
        self.demands.clear();
        self.costs.clear();
        self.offsets.push(0);
        for tour in solution.tours() {
            self.customers.extend(tour.customers().iter().map(|&c| to_c(c)));
            self.offsets.push(to_c(self.customers.len()));
            self.demands.push(c_int::try_from(tour.demand()).unwrap_or(c_int::MAX));
            self.costs.push(tour.cost());
        }
        let cap = self.output_cap();
        self.out.resize(cap, 0);
        let n = unsafe {
            (self.select)(
                self.handle,
                to_c(solution.tours().len()),
                self.offsets.as_ptr(),
                self.customers.as_ptr(),
                self.demands.as_ptr(),
                self.costs.as_ptr(),
                solution.travel_cost(),
                self.out.as_mut_ptr(),
                to_c(cap),
            )
        };
        if n < 0 {
            return Err(OperatorError::Crash("select_by_llm_1 threw an exception".into()));
        }
        Ok(from_c(&self.out[..(n as usize).min(cap)]))
    }

    fn sort(&mut self, removed: &[usize]) -> Result<Vec<usize>, OperatorError> {
        self.ids.clear();
        self.ids.extend(removed.iter().map(|&c| to_c(c)));
        let cap = self.output_cap();
        self.out.resize(cap, 0);
        let n = unsafe { (self.sort)(self.handle, self.ids.as_ptr(), to_c(self.ids.len()), self.out.as_mut_ptr(), to_c(cap)) };
        if n < 0 {
            return Err(OperatorError::Crash("sort_by_llm_1 threw an exception".into()));
        }
        Ok(from_c(&self.out[..(n as usize).min(cap)]))
    }
}

struct Remove(Rc<RefCell<Candidate>>);
struct Order(Rc<RefCell<Candidate>>);

impl RemovalOperator for Remove {
    fn select(&self, _: &Instance, solution: &Solution, _: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
        self.0.borrow_mut().select(solution)
    }
}

impl OrderingOperator for Order {
    fn order(&self, _: &Instance, removed: &[usize], _: &Solution, _: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
        self.0.borrow_mut().sort(removed)
    }
}

fn symbol<T: Copy>(lib: &libloading::Library, name: &[u8], path: &Path) -> Result<T, LoadError> {
    unsafe {
        lib.get::<T>(name).map(|s| *s).map_err(|e| LoadError::Library {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Loads the library at `path` and binds it to `instance`. The candidate's
/// random state is seeded from `seed`; the LNS rng is not shared with it.
///
/// Loading runs the library's static initializers, so only load artifacts
/// built by [`crate::compile::Compiler`], and only in a worker process.
pub fn load(path: &Path, instance: &Instance, seed: u64) -> Result<OperatorPair, LoadError> {
    let library = unsafe { libloading::Library::new(path) }.map_err(|e| LoadError::Library {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let version: VersionFn = symbol(&library, b"vrpa_shim_version\0", path)?;
    let found = unsafe { version() };
    if found != SHIM_VERSION as i32 {
        return Err(LoadError::ShimVersion { found });
    }
    let create: CreateFn = symbol(&library, b"vrpa_create\0", path)?;
    let destroy: DestroyFn = symbol(&library, b"vrpa_destroy\0", path)?;
    let select: SelectFn = symbol(&library, b"vrpa_select\0", path)?;
    let sort: SortFn = symbol(&library, b"vrpa_sort\0", path)?;

    let nodes = instance.nodes();
    let xs: Vec<f64> = nodes.iter().map(|n| n.x).collect();
    let ys: Vec<f64> = nodes.iter().map(|n| n.y).collect();
    let demand: Vec<c_int> = nodes.iter().map(|n| c_int::try_from(n.demand).unwrap_or(c_int::MAX)).collect();
    let tw_start: Vec<f64> = nodes.iter().map(|n| n.tw_start).collect();
    let tw_end: Vec<f64> = nodes.iter().map(|n| n.tw_end).collect();
    let service: Vec<f64> = nodes.iter().map(|n| n.service).collect();
    let prize: Vec<f64> = (0..nodes.len()).map(|i| instance.prize(i)).collect();
    let adjacency: Vec<c_int> = (0..nodes.len())
        .flat_map(|i| instance.adjacency(i).iter().map(|&j| j as c_int))
        .collect();
    let handle = unsafe {
        create(
            to_c(nodes.len()),
            c_int::try_from(instance.capacity()).unwrap_or(c_int::MAX),
            xs.as_ptr(),
            ys.as_ptr(),
            demand.as_ptr(),
            tw_start.as_ptr(),
            tw_end.as_ptr(),
            service.as_ptr(),
            prize.as_ptr(),
            adjacency.as_ptr(),
            seed,
        )
    };
    if handle.is_null() {
        return Err(LoadError::Init);
    }
    let candidate = Rc::new(RefCell::new(Candidate {
        handle,
        destroy,
        select,
        sort,
        num_nodes: nodes.len(),
        offsets: Vec::new(),
        customers: Vec::new(),
        demands: Vec::new(),
        costs: Vec::new(),
        ids: Vec::new(),
        out: Vec::new(),
        _library: library,
    }));
    Ok(OperatorPair {
        remove: Box::new(Remove(candidate.clone())),
        order: Box::new(Order(candidate)),
        label: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        origin: Origin::ExternalCandidate,
    })
}
