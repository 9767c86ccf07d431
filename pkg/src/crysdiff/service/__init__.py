"""FastAPI service wrapping the crysdiff pipeline.

`schemas` holds the pydantic request/response models, `operations` the plain
request->response functions (shared by the HTTP app and the CLI thin client),
and `app` the FastAPI application.
"""
