#pragma once

#include <deque>

#include "gyre/losses.hpp"
#include "gyre/rng.hpp"

// Episode-structured replay: sequences are sampled uniformly over all valid
// start offsets and never straddle an episode boundary, because a window is
// always cut from a single stored episode.

namespace gyre {

struct ReplayEpisode {
  std::vector<Tensor2> obs;  // steps()+1 rows of (1, obs_dim)
  std::vector<Tensor2> act;  // steps() of (1, act_dim)
  std::vector<double> rew;   // steps()

  int steps() const { return static_cast<int>(act.size()); }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity_steps);

  void begin_episode(const Tensor2& first_obs);
  // appends one transition to the open episode: its action, reward, and the
  // observation that followed
  void push(const Tensor2& act, double reward, const Tensor2& next_obs);

  int size_steps() const { return total_steps_; }
  int episode_count() const { return static_cast<int>(eps_.size()); }
  // number of distinct (episode, offset) windows of this length
  int valid_starts(int seq_len) const;

  // batch_size independent uniform draws over the valid windows; throws when
  // none exist
  SeqBatch sample(int batch_size, int seq_len, Rng& rng) const;

 private:
  std::deque<ReplayEpisode> eps_;
  int capacity_;
  int total_steps_ = 0;
  bool open_ = false;
};

}  // namespace gyre
