// Copyright 2026 The dtvit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Forward and backward numeric kernels over plain tensors. These functions
// know nothing about gradient tapes; autograd.hpp wraps them.
//
// Every multiply-accumulate performed by matmul/conv2d is added to a
// thread-local counter so static cost formulas can be checked against an
// executed forward pass.

#pragma once

#include <cstdint>
#include <vector>

#include "dualtoken/tensor.hpp"

namespace dtvit::kernels {

std::uint64_t mac_count();
void reset_mac_count();
void add_macs(std::uint64_t n);

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Shape helpers; throw dtvit::Error on invalid arithmetic.
Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dSpec& spec);

template <class T> T gelu(T x);
template <class T> T gelu_grad(T x);
template <class T> T sigmoid(T x);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a^T * b and a * b^T without materialising the transpose.
template <class T> Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);

// x: H x W x Cin, w: kh x kw x Cin/groups x Cout, bias: Cout or empty.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dSpec& spec);
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Conv2dSpec& spec,
                     const Tensor<T>& grad_out, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_bias);

// Non-overlapping k x k mean pooling.
template <class T> Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t k);
template <class T>
Tensor<T> avgpool2d_backward(const Shape& x_shape, std::size_t k, const Tensor<T>& grad_out);

struct LayerNormCache {
  std::vector<double> mean;
  std::vector<double> rstd;
};

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    double eps, LayerNormCache* cache);
template <class T>
void layernorm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const LayerNormCache& cache,
                        const Tensor<T>& grad_out, Tensor<T>* grad_x, Tensor<T>* grad_gamma,
                        Tensor<T>* grad_beta);

// Softmax over the last axis with max subtraction.
template <class T> Tensor<T> softmax(const Tensor<T>& x);
template <class T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

// Bilinear resampling, half-pixel centres (align_corners = false), edge clamp.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);
template <class T>
Tensor<T> bilinear_resize_backward(const Shape& x_shape, const Tensor<T>& grad_out);

}  // namespace dtvit::kernels
