#include "lsnet/resnet_ref.hpp"

#include <string>

namespace lsnet {

namespace {

int conv_bn(NetGraph& net, ParamStore& store, int x, const std::string& name,
            const ConvSpec& spec) {
  int id = net_add_conv(net, store, x, name, spec);
  return net_add_bn(net, store, id, name + "_bn", spec.out_channels);
}

int bottleneck(NetGraph& net, ParamStore& store, int x, const std::string& name, int in_ch,
               int width, int stride) {
  const int out_ch = 4 * width;
  int y = conv_bn(net, store, x, name + ".conv1", ConvSpec{in_ch, width, 1, 1, 1, 0});
  y = net_add_unary(net, LayerKind::Relu, y, name + ".relu1");
  y = conv_bn(net, store, y, name + ".conv2", ConvSpec{width, width, 3, 3, stride, 1});
  y = net_add_unary(net, LayerKind::Relu, y, name + ".relu2");
  y = conv_bn(net, store, y, name + ".conv3", ConvSpec{width, out_ch, 1, 1, 1, 0});

  int shortcut = x;
  if (stride != 1 || in_ch != out_ch) {
    shortcut = conv_bn(net, store, x, name + ".downsample",
                       ConvSpec{in_ch, out_ch, 1, 1, stride, 0});
  }
  y = net_add_binary(net, LayerKind::Add, y, shortcut, name + ".add");
  return net_add_unary(net, LayerKind::Relu, y, name + ".relu3");
}

}  // namespace

NetGraph resnet50_cost_graph(ParamStore& store) {
  NetGraph net;
  int x = net_add_input(net, "image");
  x = conv_bn(net, store, x, "resnet50.stem.conv1", ConvSpec{3, 64, 7, 7, 2, 3});
  x = net_add_unary(net, LayerKind::Relu, x, "resnet50.stem.relu");
  x = net_add_max_pool(net, x, "resnet50.stem.maxpool", 3, 2, 1);

  const int stage_blocks[4] = {3, 4, 6, 3};
  const int stage_width[4] = {64, 128, 256, 512};
  int in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < stage_blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      x = bottleneck(net, store, x,
                     "resnet50.layer" + std::to_string(s + 1) + ".block" + std::to_string(b),
                     in_ch, stage_width[s], stride);
      in_ch = 4 * stage_width[s];
    }
  }
  x = net_add_unary(net, LayerKind::GlobalAvgPool, x, "resnet50.avgpool");
  net.mark_output(x);
  net.tap("features", x);
  return net;
}

}  // namespace lsnet
