#pragma once

#include <string>

#include "jbsde/ensemble.hpp"
#include "jbsde/solution.hpp"

namespace jbsde {

// Binary caches. Both formats share the same header scheme:
//
//   JBSD (ensembles)  magic "JBSD", version u32, seed u64, n_paths u64,
//                     n_steps u32, dim_k u32, n_marks u32, d_X u32,
//                     then f64 blocks: horizon, node times (n_steps+1),
//                     Brownian increments [path][step][k],
//                     factor states [path][node][d_X],
//                     then jump counts as u32 [path][step][mark].
//
//   JBSS (solutions)  magic "JBSS", version u32, n_paths u64, n_steps u32,
//                     dim_d u32, dim_k u32, n_marks u32,
//                     then two length-prefixed strings (problem name, scheme
//                     summary), then f64 blocks Y [path][node][d],
//                     Z [path][step][d][k], U [path][step][d][m].
//
// All integers and doubles are little-endian; doubles are raw IEEE-754 bit
// patterns, so a save-then-load round trip is bit-identical. A wrong magic or
// an unsupported version throws FormatError; a size mismatch throws
// CorruptionError naming the expected and actual byte counts.

void cache_ensemble(const PathEnsemble& ens, const std::string& path);
PathEnsemble load_ensemble(const std::string& path);

void cache_solution(const DiscreteSolution& sol, const std::string& path);
DiscreteSolution load_solution(const std::string& path);

}  // namespace jbsde
