#pragma once

#include <cstddef>
#include <functional>

namespace stpp::threads {

// Global worker count; 1 forces serial execution. Defaults to all cores.
void set_count(int n);
int count();

// Runs fn(i) for i in [0, n). Work items must be independent and write to
// disjoint slots, which makes parallel runs bit-identical to serial ones.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace stpp::threads
