#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_stack_pop_path2_discard_without_out(void)
{
    int values[] = {4, 5};
    struct stack *s = stack_from_values(values, 2);
    TEST_ASSERT_EQUAL_INT(0, stack_pop(s, NULL));
    TEST_ASSERT_EQUAL_size_t(1, s->size);
    stack_destroy(s);
}
