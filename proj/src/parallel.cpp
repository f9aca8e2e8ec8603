#include "mct/parallel.hpp"

#include <atomic>

namespace mct {

namespace {
std::atomic<int> g_jobs{1};
}

int default_jobs() { return g_jobs.load(); }
void set_default_jobs(int jobs) { g_jobs.store(std::max(jobs, 1)); }

}  // namespace mct
