#include "flowlab/flow/model.hpp"

namespace flowlab::flow {

template class FlowModelT<float>;
template class FlowModelT<double>;

}  // namespace flowlab::flow
