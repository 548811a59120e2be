#pragma once

// Rank/size identity and the collectives the algorithms need (sum allreduce, custom-operator
// allreduce, broadcast, row allgather). Two backends ship here:
//
//   solo        size 1, every collective is the identity
//   in-process  one thread per rank; point-to-point FIFO mailboxes guarded by one mutex
//
// A message-passing backend plugs in by implementing Transport (send/recv/poison); the
// collective algorithms below only use those three calls.
//
// Reductions follow a fixed binomial tree over rank order and combine(lower, higher) operands
// are never swapped; the root result is then broadcast down a binomial tree. With a fixed size
// and fixed inputs every collective is bitwise reproducible.
//
// Every message carries the sender's collective sequence number and kind. A receiver that
// sees a different (seq, kind) than it expects poisons the world, which makes every rank
// blocked or entering a collective throw CollectiveError instead of hanging.

#include "tsvd/dense_matrix.hpp"
#include "tsvd/errors.hpp"

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace tsvd {

enum class Backend : std::uint8_t { solo, in_process };

enum class CollectiveKind : std::uint8_t { allreduce_sum, allreduce_custom, broadcast, allgather };

inline std::string_view to_string(CollectiveKind k) noexcept {
    switch (k) {
    case CollectiveKind::allreduce_sum: return "allreduce_sum";
    case CollectiveKind::allreduce_custom: return "allreduce_custom";
    case CollectiveKind::broadcast: return "broadcast";
    case CollectiveKind::allgather: return "allgather";
    }
    return "unknown";
}

struct MessageHeader {
    std::uint64_t seq = 0;
    CollectiveKind kind = CollectiveKind::allreduce_sum;
    Precision precision = Precision::f64;
    index_t rows = 0;
    index_t cols = 0;
};

struct Message {
    MessageHeader header;
    std::vector<std::byte> payload; ///< row-major elements, native byte order
};

/// Point-to-point layer under the collectives. One instance per rank.
class Transport {
public:
    virtual ~Transport() = default;

    [[nodiscard]] virtual int rank() const = 0;
    [[nodiscard]] virtual int size() const = 0;
    [[nodiscard]] virtual Backend backend() const = 0;

    virtual void send(int dst, Message msg) = 0;
    /// Blocks until a message from `src` arrives; throws CollectiveError once the world is poisoned.
    virtual Message recv(int src) = 0;
    /// Fail the collective on every rank.
    virtual void poison(const std::string& reason) = 0;
    /// Throws CollectiveError if some rank already poisoned the world.
    virtual void check() = 0;
};

class SoloTransport final : public Transport {
public:
    [[nodiscard]] int rank() const override { return 0; }
    [[nodiscard]] int size() const override { return 1; }
    [[nodiscard]] Backend backend() const override { return Backend::solo; }
    void send(int, Message) override { throw ContractError("solo backend has no peers to send to"); }
    Message recv(int) override { throw ContractError("solo backend has no peers to receive from"); }
    void poison(const std::string& reason) override { throw CollectiveError(reason); }
    void check() override {}
};

/// Shared state of one in-process world: mailboxes plus liveness bookkeeping for deadlock detection.
class InProcessWorld {
public:
    explicit InProcessWorld(int size)
        : size_(size), boxes_(static_cast<std::size_t>(size * size)), waiting_on_(static_cast<std::size_t>(size), -1),
          finished_(static_cast<std::size_t>(size), false) {
        if (size < 1) {
            throw ContractError("communicator size must be positive, got " + std::to_string(size));
        }
    }

    [[nodiscard]] int size() const noexcept { return size_; }

    void send(int src, int dst, Message msg) {
        {
            std::lock_guard lock(mu_);
            if (poisoned_) {
                throw CollectiveError(reason_);
            }
            box(src, dst).push_back(std::move(msg));
        }
        cv_.notify_all();
    }

    Message recv(int src, int dst) {
        std::unique_lock lock(mu_);
        for (;;) {
            if (poisoned_) {
                throw CollectiveError(reason_);
            }
            auto& b = box(src, dst);
            if (!b.empty()) {
                Message m = std::move(b.front());
                b.pop_front();
                return m;
            }
            if (finished_[static_cast<std::size_t>(src)]) {
                poison_locked(dst, "rank " + std::to_string(src) + " left while rank " + std::to_string(dst) +
                                       " was waiting on it inside a collective");
                continue;
            }
            waiting_on_[static_cast<std::size_t>(dst)] = src;
            if (deadlocked_locked()) {
                waiting_on_[static_cast<std::size_t>(dst)] = -1;
                poison_locked(dst, "collective deadlock: every live rank is waiting on a peer (mismatched collectives)");
                continue;
            }
            cv_.wait(lock);
            waiting_on_[static_cast<std::size_t>(dst)] = -1;
        }
    }

    void poison(int rank, const std::string& reason) {
        std::lock_guard lock(mu_);
        poison_locked(rank, reason);
    }

    void check() {
        std::lock_guard lock(mu_);
        if (poisoned_) {
            throw CollectiveError(reason_);
        }
    }

    void finish(int rank) {
        {
            std::lock_guard lock(mu_);
            finished_[static_cast<std::size_t>(rank)] = true;
        }
        cv_.notify_all();
    }

    /// Rank that first poisoned the world, or -1.
    [[nodiscard]] int first_poisoner() {
        std::lock_guard lock(mu_);
        return first_poisoner_;
    }

private:
    std::deque<Message>& box(int src, int dst) { return boxes_[static_cast<std::size_t>(src * size_ + dst)]; }

    void poison_locked(int rank, const std::string& reason) {
        if (!poisoned_) {
            poisoned_ = true;
            reason_ = reason;
            first_poisoner_ = rank;
        }
        cv_.notify_all();
    }

    bool deadlocked_locked() {
        for (int r = 0; r < size_; ++r) {
            if (finished_[static_cast<std::size_t>(r)]) {
                continue;
            }
            const int src = waiting_on_[static_cast<std::size_t>(r)];
            if (src < 0) {
                return false; // still computing
            }
            if (!box(src, r).empty() || finished_[static_cast<std::size_t>(src)]) {
                return false; // will wake and make progress or report
            }
        }
        return true;
    }

    int size_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::deque<Message>> boxes_;
    std::vector<int> waiting_on_;
    std::vector<bool> finished_;
    bool poisoned_ = false;
    std::string reason_;
    int first_poisoner_ = -1;
};

class InProcessTransport final : public Transport {
public:
    InProcessTransport(std::shared_ptr<InProcessWorld> world, int rank) : world_(std::move(world)), rank_(rank) {
        if (rank < 0 || rank >= world_->size()) {
            throw ContractError("rank " + std::to_string(rank) + " outside world of size " +
                                std::to_string(world_->size()));
        }
    }

    [[nodiscard]] int rank() const override { return rank_; }
    [[nodiscard]] int size() const override { return world_->size(); }
    [[nodiscard]] Backend backend() const override { return Backend::in_process; }
    void send(int dst, Message msg) override { world_->send(rank_, dst, std::move(msg)); }
    Message recv(int src) override { return world_->recv(src, rank_); }
    void poison(const std::string& reason) override { world_->poison(rank_, reason); }
    void check() override { world_->check(); }

private:
    std::shared_ptr<InProcessWorld> world_;
    int rank_;
};

/// Handle owned by one rank context. Copies share the same rank state (and sequence counter),
/// so a copy must stay within the rank context that created it.
class Communicator {
public:
    explicit Communicator(std::unique_ptr<Transport> transport)
        : state_(std::make_shared<State>(State{std::move(transport), 0})) {}

    static Communicator solo() { return Communicator(std::make_unique<SoloTransport>()); }

    [[nodiscard]] int rank() const { return state_->transport->rank(); }
    [[nodiscard]] int size() const { return state_->transport->size(); }
    [[nodiscard]] Backend backend() const { return state_->transport->backend(); }

    /// Number of collectives this rank has entered so far.
    [[nodiscard]] std::uint64_t collective_count() const { return state_->seq; }

    /// Same rank context (and therefore the same world).
    [[nodiscard]] bool same_as(const Communicator& other) const noexcept { return state_ == other.state_; }

    Transport& transport() { return *state_->transport; }

    /// Start a collective: checks for poison and hands out the next sequence number.
    std::uint64_t begin_collective() {
        state_->transport->check();
        return state_->seq++;
    }

private:
    struct State {
        std::unique_ptr<Transport> transport;
        std::uint64_t seq;
    };
    std::shared_ptr<State> state_;
};

/// Deterministic, operand-order-preserving reduction operator over fixed-shape payloads.
/// combine(lower_rank_subtree, higher_rank_subtree) must return the payload shape.
template<std::floating_point T>
struct ReduceOperator {
    index_t rows = 0;
    index_t cols = 0;
    std::function<DenseMatrix<T>(const DenseMatrix<T>&, const DenseMatrix<T>&)> combine;
};

namespace detail {

template<std::floating_point T>
Message pack(const DenseMatrix<T>& m, std::uint64_t seq, CollectiveKind kind) {
    Message msg;
    msg.header = {seq, kind, precision_of<T>(), m.rows(), m.cols()};
    msg.payload.resize(static_cast<std::size_t>(m.size()) * sizeof(T));
    if (!msg.payload.empty()) {
        std::memcpy(msg.payload.data(), m.data(), msg.payload.size());
    }
    return msg;
}

template<std::floating_point T>
DenseMatrix<T> receive(Communicator& comm, int src, std::uint64_t seq, CollectiveKind kind) {
    Message msg = comm.transport().recv(src);
    const auto& h = msg.header;
    auto fail = [&](const std::string& why) {
        comm.transport().poison(why);
        throw CollectiveError(why);
    };
    if (h.seq != seq || h.kind != kind) {
        fail("collective sequence mismatch: rank " + std::to_string(comm.rank()) + " is in #" + std::to_string(seq) +
             " " + std::string(to_string(kind)) + " but rank " + std::to_string(src) + " sent #" +
             std::to_string(h.seq) + " " + std::string(to_string(h.kind)));
    }
    if (h.precision != precision_of<T>()) {
        fail("collective precision mismatch between rank " + std::to_string(comm.rank()) + " and rank " +
             std::to_string(src));
    }
    std::vector<T> data(static_cast<std::size_t>(h.rows * h.cols));
    if (!data.empty()) {
        std::memcpy(data.data(), msg.payload.data(), data.size() * sizeof(T));
    }
    return DenseMatrix<T>(h.rows, h.cols, std::move(data));
}

// Binomial-tree reduction to rank 0 with combine(lower, higher). Only rank 0's return value is meaningful.
template<std::floating_point T, class Combine>
DenseMatrix<T> tree_reduce(Communicator& comm, DenseMatrix<T> acc, std::uint64_t seq, CollectiveKind kind,
                           Combine&& combine) {
    const int p = comm.size();
    const int r = comm.rank();
    for (int step = 1; step < p; step <<= 1) {
        if (r % (2 * step) == 0) {
            const int partner = r + step;
            if (partner < p) {
                DenseMatrix<T> other = receive<T>(comm, partner, seq, kind);
                acc = combine(acc, other, partner);
            }
        } else {
            comm.transport().send(r - step, pack(acc, seq, kind));
            break;
        }
    }
    return acc;
}

template<std::floating_point T>
DenseMatrix<T> tree_broadcast(Communicator& comm, int root, DenseMatrix<T> value, std::uint64_t seq,
                              CollectiveKind kind) {
    const int p = comm.size();
    const int rel = (comm.rank() - root + p) % p;
    int mask = 1;
    while (mask < p) {
        if (rel & mask) {
            value = receive<T>(comm, (rel - mask + root) % p, seq, kind);
            break;
        }
        mask <<= 1;
    }
    mask >>= 1;
    while (mask > 0) {
        if (rel + mask < p) {
            comm.transport().send((rel + mask + root) % p, pack(value, seq, kind));
        }
        mask >>= 1;
    }
    return value;
}

template<std::floating_point T, class Combine>
DenseMatrix<T> tree_allreduce(Communicator& comm, const DenseMatrix<T>& local, CollectiveKind kind,
                              Combine&& combine) {
    const std::uint64_t seq = comm.begin_collective();
    if (comm.size() == 1) {
        return local;
    }
    DenseMatrix<T> acc = tree_reduce(comm, local, seq, kind, std::forward<Combine>(combine));
    return tree_broadcast(comm, 0, std::move(acc), seq, kind);
}

} // namespace detail

/// Elementwise sum over all ranks, replicated on every rank.
template<std::floating_point T>
DenseMatrix<T> allreduce_sum(Communicator& comm, const DenseMatrix<T>& local) {
    return detail::tree_allreduce(
        comm, local, CollectiveKind::allreduce_sum,
        [&comm](const DenseMatrix<T>& lo, const DenseMatrix<T>& hi, int partner) {
            if (lo.rows() != hi.rows() || lo.cols() != hi.cols()) {
                const std::string why = "allreduce_sum: rank " + std::to_string(comm.rank()) + " holds " + lo.shape() +
                                        " but rank " + std::to_string(partner) + "'s subtree holds " + hi.shape();
                comm.transport().poison(why);
                throw CollectiveError(why);
            }
            DenseMatrix<T> out = lo;
            for (index_t i = 0; i < out.size(); ++i) {
                out.data()[i] += hi.data()[i];
            }
            return out;
        });
}

/// Allreduce with a caller-supplied operator; operands are combined as (lower ranks, higher ranks).
template<std::floating_point T>
DenseMatrix<T> allreduce_custom(Communicator& comm, const DenseMatrix<T>& local, const ReduceOperator<T>& op) {
    if (local.rows() != op.rows || local.cols() != op.cols) {
        const std::string why = "allreduce_custom: rank " + std::to_string(comm.rank()) + " payload " + local.shape() +
                                " does not match operator shape " + std::to_string(op.rows) + "x" +
                                std::to_string(op.cols);
        if (comm.size() > 1) {
            comm.transport().poison(why);
        }
        throw CollectiveError(why);
    }
    return detail::tree_allreduce(
        comm, local, CollectiveKind::allreduce_custom,
        [&comm, &op](const DenseMatrix<T>& lo, const DenseMatrix<T>& hi, int partner) {
            if (hi.rows() != op.rows || hi.cols() != op.cols) {
                const std::string why = "allreduce_custom: payload " + hi.shape() + " from rank " +
                                        std::to_string(partner) + " does not match operator shape";
                comm.transport().poison(why);
                throw CollectiveError(why);
            }
            DenseMatrix<T> out = op.combine(lo, hi);
            if (out.rows() != op.rows || out.cols() != op.cols) {
                const std::string why = "allreduce_custom: combine produced " + out.shape();
                comm.transport().poison(why);
                throw CollectiveError(why);
            }
            return out;
        });
}

/// Copy of root's payload on every rank. Non-root payloads are ignored.
template<std::floating_point T>
DenseMatrix<T> broadcast(Communicator& comm, int root, const DenseMatrix<T>& payload) {
    if (root < 0 || root >= comm.size()) {
        throw ContractError("broadcast: root " + std::to_string(root) + " is not a rank of a size-" +
                            std::to_string(comm.size()) + " communicator");
    }
    const std::uint64_t seq = comm.begin_collective();
    if (comm.size() == 1) {
        return payload;
    }
    return detail::tree_broadcast(comm, root, comm.rank() == root ? payload : DenseMatrix<T>(), seq,
                                  CollectiveKind::broadcast);
}

/// Vertical concatenation of every rank's block in rank order, replicated on every rank.
/// Blocks may have different row counts but must agree on columns.
template<std::floating_point T>
DenseMatrix<T> allgather_rows(Communicator& comm, const DenseMatrix<T>& local) {
    return detail::tree_allreduce(comm, local, CollectiveKind::allgather,
                                  [&comm](const DenseMatrix<T>& lo, const DenseMatrix<T>& hi, int partner) {
                                      if (lo.cols() != hi.cols()) {
                                          const std::string why = "allgather: rank " + std::to_string(partner) +
                                                                  " block has " + std::to_string(hi.cols()) +
                                                                  " columns, expected " + std::to_string(lo.cols());
                                          comm.transport().poison(why);
                                          throw CollectiveError(why);
                                      }
                                      return vstack(lo, hi);
                                  });
}

inline void barrier(Communicator& comm) { (void)allreduce_sum(comm, DenseMatrix<double>(1, 1)); }

/// Run fn(Communicator&) on `size` rank contexts and collect each rank's return value.
/// size == 1 runs inline on the solo backend; otherwise one thread per rank on the in-process
/// backend. If any rank throws, the world is poisoned and the root-cause exception is rethrown.
template<class F>
auto run_ranks(int size, F&& fn) {
    using R = std::invoke_result_t<F&, Communicator&>;
    if (size < 1) {
        throw ContractError("run_ranks: size must be positive, got " + std::to_string(size));
    }
    if (size == 1) {
        Communicator comm = Communicator::solo();
        if constexpr (std::is_void_v<R>) {
            fn(comm);
            return;
        } else {
            std::vector<R> out;
            out.push_back(fn(comm));
            return out;
        }
    } else {
        auto world = std::make_shared<InProcessWorld>(size);
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(size));
        using Slot = std::conditional_t<std::is_void_v<R>, char, std::optional<R>>;
        std::vector<Slot> results(static_cast<std::size_t>(size));
        {
            std::vector<std::jthread> threads;
            threads.reserve(static_cast<std::size_t>(size));
            for (int r = 0; r < size; ++r) {
                threads.emplace_back([&, r] {
                    try {
                        Communicator comm(std::make_unique<InProcessTransport>(world, r));
                        if constexpr (std::is_void_v<R>) {
                            fn(comm);
                        } else {
                            results[static_cast<std::size_t>(r)].emplace(fn(comm));
                        }
                    } catch (const std::exception& e) {
                        errors[static_cast<std::size_t>(r)] = std::current_exception();
                        world->poison(r, "rank " + std::to_string(r) + " failed: " + e.what());
                    } catch (...) {
                        errors[static_cast<std::size_t>(r)] = std::current_exception();
                        world->poison(r, "rank " + std::to_string(r) + " failed");
                    }
                    world->finish(r);
                });
            }
        }
        const int culprit = world->first_poisoner();
        if (culprit >= 0 && errors[static_cast<std::size_t>(culprit)]) {
            std::rethrow_exception(errors[static_cast<std::size_t>(culprit)]);
        }
        for (auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
        if constexpr (!std::is_void_v<R>) {
            std::vector<R> out;
            out.reserve(results.size());
            for (auto& slot : results) {
                out.push_back(std::move(*slot));
            }
            return out;
        }
    }
}

} // namespace tsvd
