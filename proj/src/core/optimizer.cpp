#include "core/optimizer.hpp"

#include <cmath>
#include <functional>

#include "core/bytes.hpp"
#include "core/checkpoint.hpp"
#include "core/crc32.hpp"
#include "core/wav.hpp"

namespace msce {

using nlohmann::json;

template <class T>
Adam<T>::Adam(const std::vector<Parameter<T>*>& params) : params_(params) {
    if (params_.empty()) fail_invalid("optimizer needs at least one parameter");
    for (auto* p : params_) {
        m_.emplace_back(p->value.numel(), T(0));
        v_.emplace_back(p->value.numel(), T(0));
    }
}

template <class T>
void Adam<T>::step(double lr, double beta1, double beta2, double eps) {
    if (!(lr >= 0.0)) fail_invalid("learning rate must be non-negative");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& value = params_[i]->value.data;
        const auto& grad = params_[i]->grad.data;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = static_cast<double>(grad[k]);
            const double mk = beta1 * static_cast<double>(m[k]) + (1.0 - beta1) * g;
            const double vk = beta2 * static_cast<double>(v[k]) + (1.0 - beta2) * g * g;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double m_hat = mk / bc1;
            const double v_hat = vk / bc2;
            value[k] = static_cast<T>(static_cast<double>(value[k]) -
                                      lr * m_hat / (std::sqrt(v_hat) + eps));
        }
    }
}

template <class T>
std::string Adam<T>::serialize() const {
    std::string out;
    out.append(kOptimizerMagic, 4);
    out.push_back(static_cast<char>(kOptimizerVersion));
    const std::string header = json{{"step", step_count_}}.dump();
    put_u32le(out, static_cast<std::uint32_t>(header.size()));
    out.append(header);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const int n = static_cast<int>(m_[i].size());
        std::vector<float> buf(m_[i].begin(), m_[i].end());
        put_record(out, params_[i]->name + ".m", {n}, buf.data(), buf.size());
        buf.assign(v_[i].begin(), v_[i].end());
        put_record(out, params_[i]->name + ".v", {n}, buf.data(), buf.size());
    }
    put_u32le(out, crc32(out.data(), out.size()));
    return out;
}

template <class T>
void Adam<T>::restore(const std::string& bytes) {
    RecordReader reader(bytes, kOptimizerMagic, kOptimizerVersion);
    if (!reader.header.contains("step")) fail_data("optimizer state: missing step counter");
    step_count_ = reader.header.at("step").get<long long>();

    std::string name;
    std::vector<int> dims;
    std::vector<float> values;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (auto* moment : {&m_[i], &v_[i]}) {
            const std::string expect =
                params_[i]->name + (moment == &m_[i] ? ".m" : ".v");
            if (!reader.next(name, dims, values) || name != expect ||
                values.size() != moment->size())
                fail_data("optimizer state: record mismatch at " + expect);
            moment->assign(values.begin(), values.end());
        }
    }
    if (reader.next(name, dims, values)) fail_data("optimizer state: unexpected extra record " + name);
}

template <class T>
void Adam<T>::save(const std::string& path) const {
    write_file(path, serialize());
}

template <class T>
void Adam<T>::load(const std::string& path) {
    restore(read_file(path));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace msce
