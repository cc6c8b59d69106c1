//! IO, file formats, self-check suites and benchmarks for the c3a
//! operators. The `c3a` binary in this crate is a thin dispatcher over
//! these modules.

pub mod alloc_track;
pub mod bench;
pub mod io;
pub mod verify;

/// Counting allocator so benchmarks can report transient allocations.
#[global_allocator]
static ALLOCATOR: alloc_track::CountingAllocator = alloc_track::CountingAllocator;
