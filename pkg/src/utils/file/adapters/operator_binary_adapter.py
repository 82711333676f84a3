import struct

import numpy as np

from model.operator import QUANTIZATION_TAGS, STORAGE_TAGS, Grid, HermitianOperator

MAGIC = b'SPTP'
VERSION = 1
HEADER = struct.Struct('<4sHBIdHBBI')


class OperatorBinaryAdapter:
    """
    Adapter writing and reading assembled operators in the SPTP layout.

    Little-endian header: magic 'SPTP', uint16 version, uint8 d, uint32 n,
    float64 L, uint16 N, uint8 storage tag, uint8 quantization tag,
    uint32 bandwidth. The payload is complex64, either the dense matrix
    row-major or the LAPACK upper band array row by row.
    """

    def to_bytes(self, op: HermitianOperator) -> bytes:
        header = HEADER.pack(
            MAGIC,
            VERSION,
            op.grid.d,
            op.grid.n,
            op.grid.L,
            op.fiber_dim,
            STORAGE_TAGS[op.storage],
            QUANTIZATION_TAGS.get(op.quantization, QUANTIZATION_TAGS['custom']),
            op.bandwidth
        )
        payload = np.ascontiguousarray(op.data, dtype='<c8').tobytes()
        return header + payload

    def write(self, op: HermitianOperator, path: str) -> int:
        """
        Write the operator to a file.

        Returns:
            int: Number of bytes written.
        """
        content = self.to_bytes(op)
        with open(path, 'wb') as file:
            file.write(content)
        return len(content)

    def from_bytes(self, content: bytes) -> HermitianOperator:
        """
        Rebuild an operator (with complex64 precision) from SPTP bytes.

        Raises:
            ValueError: On a wrong magic, version or payload size.
        """
        if len(content) < HEADER.size:
            raise ValueError(f'SPTP content too short: {len(content)} bytes')
        magic, version, d, n, L, N, storage_tag, quantization_tag, bandwidth = HEADER.unpack_from(content)
        if magic != MAGIC:
            raise ValueError(f'Bad magic {magic!r}')
        if version != VERSION:
            raise ValueError(f'Unsupported SPTP version {version}')
        storage = {tag: name for name, tag in STORAGE_TAGS.items()}[storage_tag]
        quantization = {tag: name for name, tag in QUANTIZATION_TAGS.items()}[quantization_tag]
        size = n ** d * N
        shape = (size, size) if storage == 'dense' else (bandwidth + 1, size)
        payload = np.frombuffer(content, dtype='<c8', offset=HEADER.size)
        if payload.size != shape[0] * shape[1]:
            raise ValueError(f'SPTP payload holds {payload.size} entries, expected {shape[0] * shape[1]}')
        return HermitianOperator(
            size=size,
            storage=storage,
            data=payload.reshape(shape).astype(complex),
            grid=Grid(d=d, L=L, n=n),
            fiber_dim=N,
            quantization=quantization,
            source_id='sptp',
            bandwidth=bandwidth
        )

    def read(self, path: str) -> HermitianOperator:
        with open(path, 'rb') as file:
            return self.from_bytes(file.read())
