"""Writes tiny_detector.onnx: a stand-in detector with a raw [1, 15, 8] head.

output = B + S * mean(image). A black image scores 0 everywhere; a white one
lights up anchor 0 as a Worker and anchor 1 as an Excavator.
"""
import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

N = 8
NC = 11
SIZE = 640

bias = np.zeros((1, 4 + NC, N), dtype=np.float32)
scale = np.zeros((1, 4 + NC, N), dtype=np.float32)
# boxes in model-input pixels: cx, cy, w, h
for i in range(N):
    bias[0, 0:4, i] = [40 + 70 * i, 320, 60, 120]
scale[0, 4 + 0, 0] = 0.9  # anchor 0 -> Worker
scale[0, 4 + 5, 1] = 0.8  # anchor 1 -> Excavator

graph = helper.make_graph(
    [
        helper.make_node("ReduceMean", ["images"], ["m"], axes=[1, 2, 3], keepdims=1),
        helper.make_node("Mul", ["m", "S"], ["scaled"]),
        helper.make_node("Add", ["scaled", "B"], ["output0"]),
    ],
    "tiny_detector",
    [helper.make_tensor_value_info("images", TensorProto.FLOAT, [1, 3, SIZE, SIZE])],
    [helper.make_tensor_value_info("output0", TensorProto.FLOAT, [1, 4 + NC, N])],
    initializer=[numpy_helper.from_array(scale, "S"), numpy_helper.from_array(bias, "B")],
)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, __file__.replace("make_tiny_detector.py", "tiny_detector.onnx"))
