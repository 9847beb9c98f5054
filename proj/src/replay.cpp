#include "gyre/replay.hpp"

#include <cstring>
#include <stdexcept>

namespace gyre {

ReplayBuffer::ReplayBuffer(int capacity_steps) : capacity_(capacity_steps) {
  if (capacity_steps < 1) throw std::invalid_argument("replay: capacity must be positive");
}

void ReplayBuffer::begin_episode(const Tensor2& first_obs) {
  if (first_obs.rows != 1) throw std::invalid_argument("replay: observations are single rows");
  ReplayEpisode e;
  e.obs.push_back(first_obs);
  eps_.push_back(std::move(e));
  open_ = true;
}

void ReplayBuffer::push(const Tensor2& act, double reward, const Tensor2& next_obs) {
  if (!open_ || eps_.empty())
    throw std::logic_error("replay: push without an open episode");
  if (act.rows != 1 || next_obs.rows != 1)
    throw std::invalid_argument("replay: transitions are single rows");
  ReplayEpisode& e = eps_.back();
  e.act.push_back(act);
  e.rew.push_back(reward);
  e.obs.push_back(next_obs);
  ++total_steps_;
  // evict whole oldest episodes, never the one being written
  while (total_steps_ > capacity_ && eps_.size() > 1) {
    total_steps_ -= eps_.front().steps();
    eps_.pop_front();
  }
}

int ReplayBuffer::valid_starts(int seq_len) const {
  if (seq_len < 1) throw std::invalid_argument("replay: sequence length must be positive");
  int n = 0;
  for (const ReplayEpisode& e : eps_) n += std::max(0, e.steps() - seq_len + 1);
  return n;
}

SeqBatch ReplayBuffer::sample(int batch_size, int seq_len, Rng& rng) const {
  const int total = valid_starts(seq_len);
  if (total == 0) throw std::runtime_error("replay: not enough data for a full sequence");
  if (batch_size < 1) throw std::invalid_argument("replay: batch size must be positive");

  const int obs_dim = eps_.front().obs.front().cols;
  int act_dim = 0;
  for (const ReplayEpisode& e : eps_)
    if (!e.act.empty()) {
      act_dim = e.act.front().cols;
      break;
    }
  SeqBatch batch;
  for (int t = 0; t <= seq_len; ++t) batch.obs.emplace_back(batch_size, obs_dim);
  for (int t = 0; t < seq_len; ++t) {
    batch.act.emplace_back(batch_size, act_dim);
    batch.rew.emplace_back(batch_size, 1);
  }

  for (int b = 0; b < batch_size; ++b) {
    int draw = rng.uniform_int(0, total - 1);
    const ReplayEpisode* ep = nullptr;
    int start = 0;
    for (const ReplayEpisode& e : eps_) {
      const int n = std::max(0, e.steps() - seq_len + 1);
      if (draw < n) {
        ep = &e;
        start = draw;
        break;
      }
      draw -= n;
    }
    for (int t = 0; t <= seq_len; ++t)
      std::memcpy(&batch.obs[t].at(b, 0), ep->obs[start + t].data.data(),
                  sizeof(double) * obs_dim);
    for (int t = 0; t < seq_len; ++t) {
      std::memcpy(&batch.act[t].at(b, 0), ep->act[start + t].data.data(),
                  sizeof(double) * act_dim);
      batch.rew[t].at(b, 0) = ep->rew[start + t];
    }
  }
  return batch;
}

}  // namespace gyre
