#pragma once

#include <memory>

#include "posh/collectives.hpp"
#include "posh/config.hpp"
#include "posh/datamover.hpp"
#include "posh/error.hpp"
#include "posh/heap.hpp"
#include "posh/sync.hpp"

namespace posh {

/// One PE's view of the job: its symmetric heap plus the collectives engine.
class Runtime {
 public:
  explicit Runtime(const RuntimeConfig& config = RuntimeConfig::from_env())
      : heap_(std::make_unique<Heap>(config)), coll_(std::make_unique<Collectives>(*heap_)) {}

  Heap& heap() { return *heap_; }
  Collectives& coll() { return *coll_; }
  int rank() const { return heap_->rank(); }
  int npes() const { return heap_->npes(); }

  void barrier() { heap_->barrier_all(); }

  /// Collective shutdown. The destructor only releases local resources.
  void finalize() { heap_->finalize(); }

 private:
  std::unique_ptr<Heap> heap_;
  std::unique_ptr<Collectives> coll_;
};

}  // namespace posh
