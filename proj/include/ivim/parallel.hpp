/*
 * ivim : motion-compensated quantitative IVIM analysis of multi-b-value DWI
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef IVIM_PARALLEL_HPP
#define IVIM_PARALLEL_HPP

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ivim::par {

/// Set the worker count for all parallel kernels. 0 restores the OpenMP
/// default. Results of every kernel in this library are bit-identical for
/// any thread count: reductions always combine fixed-order partials and
/// scatter accumulations run on a single thread.
void set_threads(int n);
int max_threads();

template <class F>
void for_rows(int height, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int y = 0; y < height; ++y) body(y);
}

template <class F>
void for_index(int count, F&& body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < count; ++i) body(i);
}

/// Deterministic image reduction: per-row partial sums are computed in
/// parallel, each row serially left-to-right, then combined in row order.
template <class RowSum>
double sum_rows(int height, RowSum&& row_sum) {
    std::vector<double> partial(static_cast<std::size_t>(height), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int y = 0; y < height; ++y) partial[y] = row_sum(y);
    double total = 0.0;
    for (int y = 0; y < height; ++y) total += partial[y];
    return total;
}

} // namespace ivim::par

#endif
