import os

# keep BLAS single-threaded: results stay bit-reproducible and the test
# machines are small
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
