#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_stack_create_path4_large_capacity_kept(void)
{
    struct stack *s = stack_create(16);
    TEST_ASSERT_NOT_NULL(s);
    TEST_ASSERT_EQUAL_size_t(16, s->capacity);
    stack_destroy(s);
}
