from setuptools import setup
from setuptools import find_packages

def _requires_from_file(filename):
    return open(filename).read().splitlines()

setup(
    name="qcoinflip",
    version="1.0.0",
    license="MIT",
    description='弱コヒーレント光と不完全な検出器による量子コイン投げプロトコルの不正確率・中断確率を解析し、古典プロトコルとの比較を再現するプログラム',
    author="qcoinflip Development Team",
    packages=find_packages("src"),
    package_dir={"": "src"},
    package_data={'': ['LICENSE.txt']},
    include_package_data=True,
    zip_safe=False,
    python_requires='>=3.8',
    install_requires=_requires_from_file('requirements.txt'),
    extras_require={
        'test': ['pytest'],
    },
    entry_points= {
        'console_scripts': ['qcoinflip=qcoinflip.qcoinflip:main']
    }
)
