"""Download the four MNIST IDX files into the data directory.

This is the only place the project touches the network; the loaders in
``src.dataset`` read plain (decompressed) IDX files.
"""

import gzip
from pathlib import Path

import httpx
import typer
from tenacity import retry, retry_if_exception, stop_after_attempt, wait_exponential

from settings import get_settings
from src.dataset import TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS
from utility.logging_config import get_logger

app = typer.Typer()
logger = get_logger("fetch_mnist")

DEFAULT_MIRROR = "https://storage.googleapis.com/cvdf-datasets/mnist/"
FILES = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]


def _transient(e: BaseException) -> bool:
    if isinstance(e, httpx.HTTPStatusError):
        return e.response.status_code >= 500
    return isinstance(e, httpx.TransportError)


@retry(
    retry=retry_if_exception(_transient),
    wait=wait_exponential(multiplier=1, min=2, max=10),
    stop=stop_after_attempt(5),
    reraise=True,
)
def download(client: httpx.Client, url: str) -> bytes:
    response = client.get(url)
    response.raise_for_status()
    return response.content


@app.command()
def main(
    data_dir: Path = typer.Option(None, help="target directory (default: MNIST_DATA_DIR)"),
    mirror: str = typer.Option(DEFAULT_MIRROR, help="base URL serving <name>.gz files"),
    force: bool = typer.Option(False, help="re-download files that already exist"),
):
    target = data_dir or get_settings().mnist_data_dir
    if target is None:
        typer.echo("error: pass --data-dir or set MNIST_DATA_DIR", err=True)
        raise typer.Exit(code=1)

    target.mkdir(parents=True, exist_ok=True)
    with httpx.Client(timeout=60.0, follow_redirects=True) as client:
        for name in FILES:
            path = target / name
            if path.exists() and not force:
                logger.info(f"{path} already present, skipping")
                continue

            url = f"{mirror.rstrip('/')}/{name}.gz"
            logger.info(f"downloading {url}")
            try:
                payload = download(client, url)
            except httpx.HTTPError as e:
                typer.echo(f"error: could not download {url}: {e}", err=True)
                raise typer.Exit(code=1)

            try:
                content = gzip.decompress(payload)
            except (gzip.BadGzipFile, EOFError) as e:
                typer.echo(f"error: {url} is not a gzip archive: {e}", err=True)
                raise typer.Exit(code=1)

            path.write_bytes(content)
            logger.info(f"wrote {path}")


if __name__ == "__main__":
    app()
