# =================================================================
# Copyright (C) 2024 by the veilblock authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# =================================================================
import importlib
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Sequence

from ...definitions import PirError

LOGGER = logging.getLogger(__name__)

BACKENDS = {
    "plaintext-reference": "veilblock.protocol.pir.backends.plaintext_reference.PlaintextReferenceBackend",
}


class FheBackend(ABC):
    """
    Homomorphic encryption scheme used for one-hot bucket selection.

    Ciphertexts and secret keys are backend-specific objects; only `serialize`/`deserialize`
    output travels on the wire.
    """
    name: str = None
    private: bool = True

    def __init__(self, params: Dict = None):
        self.params = dict(params or {})

    @property
    @abstractmethod
    def plaintext_slot_bytes(self) -> int:
        """plaintext bytes one ciphertext can hold"""

    @abstractmethod
    def keygen(self) -> Any:
        pass

    @abstractmethod
    def enc(self, sk: Any, value: int) -> Any:
        pass

    @abstractmethod
    def add(self, cts: Sequence[Any]) -> Any:
        pass

    @abstractmethod
    def multiply(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def absorb(self, ct: Any, plaintext: bytes) -> Any:
        """multiply a ciphertext by a plaintext of at most `plaintext_slot_bytes` bytes"""

    @abstractmethod
    def dec(self, sk: Any, ct: Any) -> bytes:
        pass

    @abstractmethod
    def serialize(self, ct: Any) -> bytes:
        pass

    @abstractmethod
    def deserialize(self, data: bytes) -> Any:
        pass


def load_backend(name: str, params: Dict = None) -> FheBackend:
    """
    Instantiate a registered backend

    :param name: key in `BACKENDS`, or a dotted `module.Class` path
    :param params: backend parameters, e.g. `ring_dimension`

    :returns: `FheBackend` instance
    """
    path = BACKENDS.get(name, name)
    module_name, _, class_name = path.rpartition(".")
    if not module_name:
        raise PirError(f"unknown pir backend {name}")
    try:
        cls = getattr(importlib.import_module(module_name), class_name)
    except (ImportError, AttributeError) as ex:
        raise PirError(f"cannot load pir backend {name}: {ex}")
    backend = cls(params)
    if not backend.private:
        LOGGER.warning(f"pir backend {backend.name} is NOT PRIVATE; use it for testing only")
    return backend
