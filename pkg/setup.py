#!/usr/bin/env python

from os.path import join
import setuptools

setuptools.setup(
    name='columnar-homog',
    version='0.1.0',
    description='Numerical homogenization of high-contrast columnar composites '
    'with a Hall perturbation',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    license='MIT',
    packages=['columnar_homog'],
    include_package_data=True,
    zip_safe=False,
    python_requires='>=3.9',
    install_requires=[
        'click',
        'pandas',
        'numpy',
        'scipy>=1.12',
    ],
    scripts=[
        join('scripts', 'columnar_homog.py'),
    ],
    keywords='homogenization',
    classifiers=[
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Operating System :: MacOS :: MacOS X',
        'Operating System :: POSIX',
        'Operating System :: Unix',
        'Programming Language :: Python',
        'Topic :: Scientific/Engineering',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
