#include "serum/text_decoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace serum {

void validate_target(const std::vector<TokenId>& target, int64_t max_length) {
    if (target.empty()) {
        throw std::invalid_argument("decode target is empty");
    }
    if (target.back() != Vocabulary::kEos) {
        throw std::invalid_argument("decode target must end with EOS");
    }
    if (std::find(target.begin(), target.end(), Vocabulary::kPad) != target.end()) {
        throw std::invalid_argument("decode target contains PAD");
    }
    if (static_cast<int64_t>(target.size()) > max_length) {
        throw std::invalid_argument("decode target of length " + std::to_string(target.size()) +
                                    " exceeds max_decode_len " + std::to_string(max_length));
    }
}

DecodeMemory TextDecoder::build_memory(const std::vector<const MergedContext*>& contexts,
                                       const std::vector<torch::Tensor>& query_rows) const {
    if (contexts.size() != query_rows.size() || contexts.empty()) {
        throw std::invalid_argument("build_memory needs one context and one query block per stream");
    }
    const int64_t k = contexts.front()->context.size(0);
    int64_t max_rows = 0;
    for (const auto& q : query_rows) {
        max_rows = std::max(max_rows, q.size(0));
    }
    std::vector<torch::Tensor> memories, positions, paddings;
    for (std::size_t b = 0; b < contexts.size(); ++b) {
        const auto& ctx = *contexts[b];
        if (ctx.context.size(0) != k) {
            throw std::invalid_argument("streams in one batch must share the context length K");
        }
        const auto& q = query_rows[b];
        const int64_t missing = max_rows - q.size(0);
        const int64_t d = ctx.context.size(1);
        auto rows = torch::cat({ctx.context, q, ctx.context.new_zeros({missing, d})});
        const auto fg = torch::tensor(ctx.foreground_indices, torch::kLong);
        auto pos = torch::cat({token_pos.index_select(0, fg), token_pos.new_zeros({max_rows, d})});
        auto pad = torch::zeros({k + max_rows}, torch::kBool);
        if (missing > 0) {
            pad.slice(0, k + q.size(0)).fill_(true);
        }
        memories.push_back(rows);
        positions.push_back(pos);
        paddings.push_back(pad);
    }
    return {torch::stack(memories), torch::stack(positions), torch::stack(paddings)};
}

torch::Tensor TextDecoder::embed(const torch::Tensor& ids, int64_t offset) {
    const int64_t t = ids.size(1);
    return token_embedding(ids) + step_pos.slice(0, offset, offset + t).unsqueeze(0);
}

torch::Tensor TextDecoder::logits(const DecodeMemory& memory, const torch::Tensor& ids) {
    const int64_t t = ids.size(1);
    if (t > max_length()) {
        throw std::length_error("sequence of length " + std::to_string(t) +
                                " exceeds max_decode_len " + std::to_string(max_length()));
    }
    const auto x = embed(ids, 0);
    const auto h = stack->forward(x, memory.memory, memory.positions,
                                  causal_bias(t, x.options()), {}, memory.padding);
    return output_head(h);
}

DecodeState TextDecoder::start(const DecodeMemory& memory) {
    DecodeState state;
    state.memory = memory;
    state.ids.assign(static_cast<std::size_t>(memory.batch()), {Vocabulary::kBos});
    state.caches.resize(stack->layers.size());
    for (std::size_t i = 0; i < stack->layers.size(); ++i) {
        stack->layers[i]->prime(memory.memory, memory.positions, state.caches[i]);
    }
    return state;
}

torch::Tensor TextDecoder::decode_step(DecodeState& state) {
    const int64_t len = state.length();
    if (len > max_length()) {
        throw std::length_error("decode state of length " + std::to_string(len) +
                                " exceeds max_decode_len " + std::to_string(max_length()));
    }
    if (len <= state.processed) {
        throw std::logic_error("decode_step called without a new token");
    }
    std::vector<int64_t> fresh;
    for (const auto& stream : state.ids) {
        if (static_cast<int64_t>(stream.size()) != len) {
            throw std::invalid_argument("decode streams have unequal lengths");
        }
        fresh.insert(fresh.end(), stream.begin() + state.processed, stream.end());
    }
    const auto ids = torch::tensor(fresh, torch::kLong).view({state.memory.batch(), len - state.processed});
    auto h = embed(ids, state.processed);
    for (std::size_t i = 0; i < stack->layers.size(); ++i) {
        h = stack->layers[i]->step(h, state.caches[i], state.memory.padding);
    }
    state.processed = len;
    return output_head(stack->final_norm(h.select(1, h.size(1) - 1)));
}

std::vector<std::vector<TokenId>> TextDecoder::generate(const DecodeMemory& memory,
                                                        int64_t max_len) {
    if (max_len > max_length()) {
        throw std::invalid_argument("max_len " + std::to_string(max_len) +
                                    " exceeds max_decode_len " + std::to_string(max_length()));
    }
    const auto b = static_cast<std::size_t>(memory.batch());
    std::vector<std::vector<TokenId>> out(b);
    std::vector<bool> done(b, false);
    auto state = start(memory);
    for (int64_t t = 0; t < max_len; ++t) {
        const auto next = decode_step(state).argmax(-1).to(torch::kLong).contiguous();
        const int64_t* p = next.data_ptr<int64_t>();
        bool all_done = true;
        for (std::size_t i = 0; i < b; ++i) {
            const auto id = static_cast<TokenId>(p[i]);
            if (!done[i]) {
                if (id == Vocabulary::kEos) {
                    done[i] = true;
                } else {
                    out[i].push_back(id);
                }
            }
            all_done = all_done && done[i];
            state.ids[i].push_back(id);
        }
        if (all_done) {
            break;
        }
    }
    return out;
}

torch::Tensor TextDecoder::teacher_forced_nll(const DecodeMemory& memory,
                                              const std::vector<std::vector<TokenId>>& targets) {
    if (static_cast<int64_t>(targets.size()) != memory.batch()) {
        throw std::invalid_argument("one target per decode stream is required");
    }
    int64_t longest = 0;
    for (const auto& target : targets) {
        validate_target(target, max_length());
        longest = std::max<int64_t>(longest, static_cast<int64_t>(target.size()));
    }
    const auto b = static_cast<int64_t>(targets.size());
    auto inputs = torch::full({b, longest}, static_cast<int64_t>(Vocabulary::kPad), torch::kLong);
    auto gold = torch::full({b, longest}, static_cast<int64_t>(Vocabulary::kPad), torch::kLong);
    auto in_acc = inputs.accessor<int64_t, 2>();
    auto gold_acc = gold.accessor<int64_t, 2>();
    for (int64_t i = 0; i < b; ++i) {
        const auto& target = targets[static_cast<std::size_t>(i)];
        in_acc[i][0] = Vocabulary::kBos;
        for (std::size_t t = 0; t < target.size(); ++t) {
            gold_acc[i][static_cast<int64_t>(t)] = target[t];
            if (t + 1 < target.size()) {
                in_acc[i][static_cast<int64_t>(t) + 1] = target[t];
            }
        }
    }
    const auto log_probs = torch::log_softmax(logits(memory, inputs), -1);
    const auto picked = log_probs.gather(2, gold.unsqueeze(2)).squeeze(2);
    const auto real = gold.ne(Vocabulary::kPad).to(picked.dtype());
    return -(picked * real).sum() / static_cast<double>(b);
}

}  // namespace serum
